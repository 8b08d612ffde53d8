// Copyright 2026 The scdet Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <tuple>

#include "scdet/byteio.hpp"
#include "scdet/datasets.hpp"
#include "scdet/victim.hpp"

namespace scdet {
namespace {

Tensor random_images(int n, std::uint64_t seed) {
  Tensor t({n, 1, 28, 28});
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.f, 1.f);
  for (auto& v : t.storage()) v = u(rng);
  return t;
}

QuantizedNetwork quantized(const std::vector<LayerSpec>& layers, const Shape& in, std::uint64_t seed) {
  auto net = Network::create(layers, in, seed);
  Shape batch{4};
  batch.insert(batch.end(), in.begin(), in.end());
  Tensor calib(batch);
  std::mt19937_64 rng(seed + 1);
  std::uniform_real_distribution<float> u(0.f, 1.f);
  for (auto& v : calib.storage()) v = u(rng);
  return quantize_network(net, calib);
}

// Enumerates every individual multiply-accumulate as (layer, output, input)
// and buckets them by position within the output's dot product.
std::size_t brute_force_cycles(const Network& net, int lanes) {
  std::set<std::tuple<int, long, long>> groups;
  std::size_t elementwise = 0;
  Shape cur = net.input_shape;
  for (std::size_t li = 0; li < net.layers.size(); ++li) {
    const auto& l = net.layers[li];
    const int id = static_cast<int>(li);
    if (l.kind == LayerKind::Conv2D) {
      const int c = cur[0], h = cur[1], w = cur[2], k = l.kernel;
      const int ho = h - k + 1, wo = w - k + 1;
      long out = 0;
      for (int oc = 0; oc < l.channels; ++oc)
        for (int y = 0; y < ho; ++y)
          for (int x = 0; x < wo; ++x, ++out) {
            long mac = 0;
            for (int ic = 0; ic < c; ++ic)
              for (int i = 0; i < k; ++i)
                for (int j = 0; j < k; ++j, ++mac) groups.emplace(id, out, mac / lanes);
          }
      cur = {l.channels, ho, wo};
    } else if (l.kind == LayerKind::FullyConnected) {
      long fan_in = 1;
      for (int d : cur) fan_in *= d;
      for (long o = 0; o < l.units; ++o)
        for (long m = 0; m < fan_in; ++m) groups.emplace(id, o, m / lanes);
      cur = {l.units};
    } else if (l.kind == LayerKind::MaxPool2D) {
      cur = {cur[0], cur[1] / l.kernel, cur[2] / l.kernel};
      elementwise += static_cast<std::size_t>(cur[0] * cur[1] * cur[2]);
    } else {
      std::size_t n = 1;
      for (int d : cur) n *= static_cast<std::size_t>(d);
      elementwise += n;
    }
  }
  return groups.size() + elementwise;
}

TEST(Generator, SameSeedSameSpec) {
  EXPECT_EQ(generate_victim(0), generate_victim(0));
  EXPECT_NE(generate_victim(0), generate_victim(1));
}

TEST(Generator, FourHundredSeedsStayInsideMenu) {
  std::set<int> kernels;
  for (std::uint64_t s = 0; s < 400; ++s) {
    const auto spec = generate_victim(s);
    EXPECT_GE(spec.depth, 2);
    EXPECT_LE(spec.depth, 18);
    bool fc_seen = false;
    for (const auto& l : spec.layers) {
      if (l.kind == LayerKind::Conv2D) {
        EXPECT_FALSE(fc_seen) << describe(spec);
        EXPECT_GE(l.kernel, 2);
        EXPECT_LE(l.kernel, 5);
        kernels.insert(l.kernel);
      }
      if (l.kind == LayerKind::FullyConnected) fc_seen = true;
    }
  }
  EXPECT_EQ(kernels.size(), 4u);
}

TEST(Generator, PropertyTenThousandSpecsRespectMenu) {
  const VictimMenu menu;
  std::set<std::pair<int, int>> conv_combos;
  std::set<int> depths;
  for (std::uint64_t s = 0; s < 10000; ++s) {
    const auto spec = generate_victim(s * 7919 + 13, menu);
    ASSERT_NO_THROW(validate_victim(spec, menu)) << describe(spec);
    ASSERT_EQ(spec.layers.size(), static_cast<std::size_t>(spec.depth));
    EXPECT_EQ(spec.layers.back().kind, LayerKind::Softmax);
    EXPECT_EQ(spec.layers[spec.layers.size() - 2].units, 10);
    Shape cur = kVictimInputShape;
    for (const auto& l : spec.layers) {
      cur = infer_output_shape(l, cur);
      for (int d : cur) ASSERT_GT(d, 0);
      if (l.kind == LayerKind::Conv2D) conv_combos.emplace(l.kernel, l.channels);
    }
    EXPECT_LE(count_macs(spec.layers), menu.max_macs);
    depths.insert(spec.depth);
  }
  EXPECT_EQ(conv_combos.size(), 12u);
  EXPECT_EQ(*depths.begin(), 2);
  EXPECT_EQ(*depths.rbegin(), 18);
}

TEST(Generator, ValidateRejectsMenuViolations) {
  VictimSpec bad{3, {LayerSpec::conv2d(7, 10), LayerSpec::fully_connected(10), LayerSpec::softmax()}, 0};
  EXPECT_THROW(validate_victim(bad), ConfigError);
  bad.layers = {LayerSpec::fully_connected(100), LayerSpec::conv2d(2, 10), LayerSpec::fully_connected(10),
                LayerSpec::softmax()};
  bad.depth = 4;
  EXPECT_THROW(validate_victim(bad), ConfigError);
  bad.layers = {LayerSpec::max_pool(5), LayerSpec::max_pool(5), LayerSpec::max_pool(5), LayerSpec::fully_connected(10),
                LayerSpec::softmax()};
  bad.depth = 5;
  EXPECT_THROW(validate_victim(bad), ConfigError);
}

TEST(Generator, ImpossibleMenuExhaustsRetries) {
  VictimMenu menu;
  menu.max_macs = 10;
  menu.max_attempts = 50;
  EXPECT_THROW(generate_victim(3, menu), ExperimentError);
}

TEST(Schedule, SingleMacIsOneCycle) {
  const auto q = quantized({LayerSpec::fully_connected(1)}, {1}, 2);
  const auto s = emit_schedule(q, Tensor({1}, {0.5f}));
  ASSERT_EQ(s.cycles(), 1u);
  EXPECT_EQ(s.engine(0), Engine::FCMAC);
  EXPECT_EQ(s.words(0).size(), 33u);
}

TEST(Schedule, ZeroInputAndWeightsGiveZeroWords) {
  auto net = Network::create({LayerSpec::conv2d(3, 10), LayerSpec::relu(), LayerSpec::max_pool(2),
                              LayerSpec::fully_connected(100)},
                             kVictimInputShape, 4);
  for (auto& layer : net.params)
    for (auto& p : layer) p.fill(0.f);
  const Tensor zeros({1, 1, 28, 28});
  const auto q = quantize_network(net, zeros);
  const auto s = emit_schedule(q, Tensor(kVictimInputShape));
  ASSERT_GT(s.cycles(), 0u);
  for (std::size_t c = 0; c < s.cycles(); ++c)
    for (auto w : s.words(c)) ASSERT_EQ(w, 0u) << "cycle " << c;
}

TEST(Schedule, CycleCountMatchesBruteForceMacRecount) {
  const std::vector<LayerSpec> layers{LayerSpec::conv2d(3, 10), LayerSpec::relu(),    LayerSpec::max_pool(3),
                                      LayerSpec::conv2d(2, 20), LayerSpec::fully_connected(100), LayerSpec::relu(),
                                      LayerSpec::fully_connected(10), LayerSpec::softmax()};
  const auto q = quantized(layers, kVictimInputShape, 5);
  const auto x = random_images(1, 6).reshaped(kVictimInputShape);
  for (int lanes : {1, 7, 16}) {
    ScheduleConfig cfg{lanes};
    const auto s = emit_schedule(q, x, cfg);
    EXPECT_EQ(s.cycles(), brute_force_cycles(q.net, lanes)) << "lanes " << lanes;
    EXPECT_EQ(s.cycles(), schedule_length(q.net, cfg));
  }
}

TEST(Schedule, HandCountedTinyNet) {
  // conv 2x2 on 1x3x3 -> 2x2x2 outputs with 4 MACs each (1 group), pool 2 -> 2 outputs,
  // FC 2->3 (3 groups), softmax over 3.
  const auto q = quantized({LayerSpec::conv2d(2, 2), LayerSpec::max_pool(2), LayerSpec::fully_connected(3),
                            LayerSpec::softmax()},
                           {1, 3, 3}, 7);
  Tensor x({1, 3, 3}, {0.1f, 0.2f, 0.3f, 0.4f, 0.5f, 0.6f, 0.7f, 0.8f, 0.9f});
  EXPECT_EQ(emit_schedule(q, x).cycles(), 8u + 2u + 3u + 3u);
}

TEST(Schedule, PureAndDataIndependentTiming) {
  const auto spec = generate_victim(11);
  const auto q = quantized(spec.layers, kVictimInputShape, 11);
  const auto imgs = random_images(3, 12);
  const auto a = emit_schedule(q, imgs.rows(0, 1).reshaped(kVictimInputShape));
  EXPECT_EQ(a, emit_schedule(q, imgs.rows(0, 1).reshaped(kVictimInputShape)));
  const auto b = emit_schedule(q, imgs.rows(1, 2).reshaped(kVictimInputShape));
  ASSERT_EQ(a.cycles(), b.cycles());
  bool differs = false;
  for (std::size_t c = 0; c < a.cycles(); ++c) {
    ASSERT_EQ(a.layer_index(c), b.layer_index(c));
    ASSERT_EQ(a.engine(c), b.engine(c));
    ASSERT_GE(a.words(c).size(), 1u);
    if (c) ASSERT_LE(a.layer_index(c - 1), a.layer_index(c));
    differs |= !std::equal(a.words(c).begin(), a.words(c).end(), b.words(c).begin(), b.words(c).end());
  }
  EXPECT_TRUE(differs);
}

TEST(Schedule, IntegerInferenceTracksFloatPrediction) {
  const Dataset data = synthetic_dataset(SyntheticFamily::Digits, 300, 21);
  VictimRecipe recipe;
  recipe.epochs = 3;
  const std::vector<LayerSpec> layers{LayerSpec::conv2d(3, 10), LayerSpec::relu(), LayerSpec::max_pool(2),
                                      LayerSpec::fully_connected(100), LayerSpec::relu(),
                                      LayerSpec::fully_connected(10), LayerSpec::softmax()};
  const auto net = train_victim_network(layers, 3, data, recipe);
  const auto q = quantize_network(net, data.inputs.rows(0, 64));
  const auto float_labels = predict_labels(net, data.inputs.rows(0, 40));
  int agree = 0;
  for (int i = 0; i < 40; ++i) {
    const auto s = emit_schedule(q, data.sample(static_cast<std::size_t>(i)));
    // The last 10 activation cycles carry the softmax outputs.
    int best = 0, best_code = -129;
    for (int k = 0; k < 10; ++k) {
      const int code = static_cast<std::int8_t>(s.words(s.cycles() - 10 + static_cast<std::size_t>(k))[1]);
      if (code > best_code) best_code = code, best = k;
    }
    agree += best == float_labels[static_cast<std::size_t>(i)];
  }
  EXPECT_GE(agree, 36);
}

TEST(Schedule, RejectsUnquantizedNetwork) {
  QuantizedNetwork q;
  q.net = Network::create({LayerSpec::fully_connected(2)}, {2}, 0);
  EXPECT_THROW(emit_schedule(q, Tensor({2})), StateError);
}

std::vector<VictimSpec> five_specs() {
  std::vector<VictimSpec> specs;
  for (std::uint64_t s = 100; specs.size() < 5; ++s) specs.push_back(generate_victim(s));
  return specs;
}

TEST(TrainVictims, MostModelsClearThresholdOnDigitSubset) {
  const Dataset data = synthetic_dataset(SyntheticFamily::Digits, 1000, 1);
  VictimRecipe recipe;
  recipe.regenerate_flagged = false;
  recipe.max_failed_fraction = 1.0;
  std::vector<VictimSpec> specs;
  for (std::uint64_t s = 100; s < 120; ++s) specs.push_back(generate_victim(s));
  const auto victims = train_victims(specs, data, recipe);
  int above = 0;
  for (const auto& v : victims) above += v.train_accuracy > 0.9;
  // The default recipe tolerates a fifth of first attempts missing the bar.
  EXPECT_GE(above, 16);
}

TEST(TrainVictims, RegenerationReplacesFlaggedSpecs) {
  const Dataset data = synthetic_dataset(SyntheticFamily::Digits, 1000, 1);
  std::vector<VictimSpec> specs;
  for (std::uint64_t s = 100; s < 120; ++s) specs.push_back(generate_victim(s));
  const auto victims = train_victims(specs, data, VictimRecipe{});
  for (const auto& v : victims) {
    EXPECT_GT(v.train_accuracy, 0.9);
    if (v.flagged) EXPECT_GT(v.regenerations, 0);
  }
}

TEST(TrainVictims, ZeroEpochsFlagsEverythingAndAborts) {
  const Dataset data = synthetic_dataset(SyntheticFamily::Digits, 200, 2);
  VictimRecipe recipe;
  recipe.epochs = 0;
  recipe.regenerate_flagged = false;
  const auto specs = five_specs();
  EXPECT_THROW(train_victims(specs, data, recipe), ExperimentError);
  recipe.max_failed_fraction = 1.0;
  const auto victims = train_victims(specs, data, recipe);
  for (const auto& v : victims) {
    EXPECT_TRUE(v.flagged);
    EXPECT_LT(v.train_accuracy, 0.3);
  }
}

TEST(TrainVictims, DeterministicAccuracyVector) {
  const Dataset data = synthetic_dataset(SyntheticFamily::Digits, 200, 3);
  VictimRecipe recipe;
  recipe.epochs = 1;
  recipe.regenerate_flagged = false;
  recipe.max_failed_fraction = 1.0;
  const auto specs = five_specs();
  std::vector<double> a, b;
  for (const auto& v : train_victims(specs, data, recipe)) a.push_back(v.train_accuracy);
  for (const auto& v : train_victims(specs, data, recipe)) b.push_back(v.train_accuracy);
  EXPECT_EQ(a, b);
}

TEST(TrainVictims, RejectsMissingOrWrongDataset) {
  const auto specs = five_specs();
  EXPECT_THROW(train_victims(specs, Dataset{}, VictimRecipe{}), DataError);
  Dataset wrong{Tensor({2, 1, 8, 8}), {0, 1}};
  EXPECT_THROW(train_victims(specs, wrong, VictimRecipe{}), DataError);
}

TEST(Datasets, IdxRoundTrip) {
  const Dataset d = synthetic_dataset(SyntheticFamily::Fashion, 20, 4);
  const std::string dir = ::testing::TempDir();
  byteio::write_file(dir + "/img.idx", encode_idx_images(d.inputs));
  byteio::write_file(dir + "/lbl.idx", encode_idx_labels(d.labels));
  const Dataset back = read_idx(dir + "/img.idx", dir + "/lbl.idx");
  EXPECT_EQ(back.labels, d.labels);
  ASSERT_EQ(back.inputs.shape(), d.inputs.shape());
  for (std::size_t i = 0; i < d.inputs.size(); ++i) ASSERT_NEAR(back.inputs[i], d.inputs[i], 0.5 / 255 + 1e-6);
}

TEST(Datasets, IdxRejectsBadMagicAndTruncation) {
  const std::string dir = ::testing::TempDir();
  std::string img = encode_idx_images(Tensor({1, 1, 28, 28}));
  const std::string lbl = encode_idx_labels(std::vector<int>{3});
  byteio::write_file(dir + "/l.idx", lbl);
  byteio::write_file(dir + "/t.idx", img.substr(0, img.size() - 5));
  EXPECT_THROW(read_idx(dir + "/t.idx", dir + "/l.idx"), DataError);
  img[3] = 0x01;
  byteio::write_file(dir + "/m.idx", img);
  EXPECT_THROW(read_idx(dir + "/m.idx", dir + "/l.idx"), DataError);
  EXPECT_THROW(read_idx(dir + "/absent.idx", dir + "/l.idx"), DataError);
}

TEST(Datasets, CifarGrayConvertsAndResizes) {
  std::string rec(1 + 3072, '\0');
  rec[0] = 7;
  for (int i = 0; i < 1024; ++i) {
    rec[1 + static_cast<std::size_t>(i)] = static_cast<char>(200);         // R
    rec[1 + 1024 + static_cast<std::size_t>(i)] = static_cast<char>(100);  // G
    rec[1 + 2048 + static_cast<std::size_t>(i)] = static_cast<char>(50);   // B
  }
  const std::string path = ::testing::TempDir() + "/c.bin";
  byteio::write_file(path, rec + rec);
  const Dataset d = read_cifar_gray(path, 1);
  ASSERT_EQ(d.size(), 2u);
  EXPECT_EQ(d.labels[0], 7);
  const double luma = (0.299 * 200 + 0.587 * 100 + 0.114 * 50) / 255.0;
  EXPECT_NEAR(d.inputs[0], luma, 1e-5);
  EXPECT_NEAR(d.inputs[28 * 28 - 1], luma, 1e-5);
}

TEST(Datasets, SyntheticFamiliesAreDeterministicAndBalanced) {
  for (auto fam : {SyntheticFamily::Digits, SyntheticFamily::Fashion, SyntheticFamily::Cifar10}) {
    const Dataset a = synthetic_dataset(fam, 100, 9);
    EXPECT_EQ(a.inputs, synthetic_dataset(fam, 100, 9).inputs) << to_string(fam);
    EXPECT_EQ(a.sample_shape(), kVictimInputShape);
    std::vector<int> counts(10);
    for (int y : a.labels) ++counts[static_cast<std::size_t>(y)];
    for (int c : counts) EXPECT_EQ(c, 10);
    for (float v : a.inputs.values()) ASSERT_TRUE(v >= 0.f && v <= 1.f);
  }
  const Dataset c100 = synthetic_dataset(SyntheticFamily::Cifar100, 200, 1);
  EXPECT_GT(*std::max_element(c100.labels.begin(), c100.labels.end()), 9);
}

}  // namespace
}  // namespace scdet
