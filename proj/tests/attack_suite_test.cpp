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

#include <cmath>
#include <random>

#include "scdet/attacks.hpp"
#include "scdet/datasets.hpp"

namespace scdet {
namespace {

double l2(std::span<const float> a, std::span<const float> b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * static_cast<double>(a[i] - b[i]);
  return std::sqrt(s);
}

double linf(std::span<const float> a, std::span<const float> b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(static_cast<double>(a[i]) - b[i]));
  return m;
}

// Two-class linear model: Z1 - Z0 = w.x + b.
Network linear_pair(std::vector<float> w, float b) {
  const int n = static_cast<int>(w.size());
  auto net = Network::create({LayerSpec::fully_connected(2)}, {n}, 0);
  std::vector<float> weights(static_cast<std::size_t>(2 * n), 0.f);
  std::copy(w.begin(), w.end(), weights.begin() + n);
  net.params[0][0] = Tensor({2, n}, weights);
  net.params[0][1] = Tensor({2}, {0.f, b});
  return net;
}

Network small_victim(std::uint64_t seed) {
  return Network::create({LayerSpec::conv2d(3, 10), LayerSpec::relu(), LayerSpec::max_pool(2),
                          LayerSpec::fully_connected(100), LayerSpec::relu(), LayerSpec::fully_connected(10),
                          LayerSpec::softmax()},
                         {1, 28, 28}, seed);
}

const Dataset& digits() {
  static const Dataset d = synthetic_dataset(SyntheticFamily::Digits, 1200, 77);
  return d;
}

const Network& trained_victim() {
  static const Network net = [] {
    auto n = small_victim(1);
    TrainOptions o;
    o.epochs = 4;
    o.lr = 2e-3;
    train(n, digits(), o);
    return n;
  }();
  return net;
}

TEST(Fgsm, ZeroEpsilonIsIdentity) {
  const auto& d = digits();
  const Tensor x = d.inputs.rows(0, 4);
  const std::vector<int> y(d.labels.begin(), d.labels.begin() + 4);
  EXPECT_EQ(fgsm(trained_victim(), x, y, 0.0), x);
}

TEST(Fgsm, StaysInsideInfinityBallAndBox) {
  const auto& d = digits();
  const Tensor x = d.inputs.rows(0, 8);
  const std::vector<int> y(d.labels.begin(), d.labels.begin() + 8);
  const Tensor adv = fgsm(trained_victim(), x, y, 0.5);
  EXPECT_LE(linf(adv.values(), x.values()), 0.5 + 1e-6);
  for (float v : adv.values()) ASSERT_TRUE(v >= 0.f && v <= 1.f);
}

TEST(Fgsm, LogisticDirectionOpposesWeightSign) {
  for (float w : {2.f, -1.5f}) {
    const auto net = linear_pair({w}, 0.f);
    const Tensor x({1, 1}, {0.5f});
    const std::vector<int> y{1};
    const Tensor adv = fgsm(net, x, y, 0.1);
    const float dir = adv[0] - x[0];
    EXPECT_NEAR(dir, w > 0 ? -0.1f : 0.1f, 1e-6);
  }
}

TEST(Pgd, SingleUnprojectedStepIsNormalizedGradient) {
  const auto& d = digits();
  const Tensor x = d.inputs.rows(5, 6);
  const std::vector<int> y{d.labels[5]};
  const Tensor g = loss_input_gradient(trained_victim(), x, y);
  double norm = 0;
  for (float v : g.values()) norm += static_cast<double>(v) * v;
  norm = std::sqrt(norm);
  const Tensor adv = pgd(trained_victim(), x, y, 10.0, 0.05, 1);
  for (std::size_t i = 0; i < x.size(); ++i)
    ASSERT_NEAR(adv[i], std::clamp(x[i] + 0.05 * g[i] / norm, 0.0, 1.0), 1e-6);
}

TEST(Pgd, RespectsL2BudgetAndBox) {
  const auto& d = digits();
  const Tensor x = d.inputs.rows(10, 16);
  const std::vector<int> y(d.labels.begin() + 10, d.labels.begin() + 16);
  const Tensor adv = pgd(trained_victim(), x, y, 0.5, 8.0 / 255.0, 40);
  for (int b = 0; b < 6; ++b) {
    const auto a = adv.rows(b, b + 1), o = x.rows(b, b + 1);
    EXPECT_LE(l2(a.values(), o.values()), 0.5 + 1e-6);
  }
  for (float v : adv.values()) ASSERT_TRUE(v >= 0.f && v <= 1.f);
}

TEST(Pgd, ConvexQuadraticApproachesBoundaryOptimum) {
  // Ascent on -|x - t|^2 from x0 with t outside the ball: the constrained
  // optimum is x0 + eps (t - x0) / |t - x0|.
  const int n = 16;
  Tensor x0({1, n}, 0.5f), target({1, n});
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<float> u(0.05f, 0.95f);
  for (auto& v : target.storage()) v = u(rng);
  const double eps = 0.3, dist = l2(target.values(), x0.values());
  ASSERT_GT(dist, eps);
  std::vector<float> opt(n);
  for (int i = 0; i < n; ++i) opt[static_cast<std::size_t>(i)] = static_cast<float>(0.5 + eps * (target[static_cast<std::size_t>(i)] - 0.5) / dist);
  auto grad = [&](const Tensor& x) {
    Tensor g(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) g[i] = -2.f * (x[i] - target[i]);
    return g;
  };
  double prev = l2(x0.values(), opt);
  for (int steps = 1; steps <= 30; ++steps) {
    const double d = l2(pgd_l2(x0, grad, eps, 0.02, steps).values(), opt);
    EXPECT_LE(d, prev + 1e-6) << steps;
    prev = d;
  }
  EXPECT_LT(prev, 1e-3);
}

TEST(CarliniWagner, MisclassifiedInputUnchanged) {
  const auto net = linear_pair({1.f, -1.f}, 0.f);
  const Tensor x({1, 2}, {0.2f, 0.7f});  // Z1 - Z0 < 0: class 0
  const std::vector<int> y{1};
  const auto r = cw_l2(net, x, y);
  EXPECT_TRUE(r.success[0]);
  EXPECT_EQ(r.l2[0], 0.0);
  EXPECT_EQ(r.x_adv, x);
}

TEST(CarliniWagner, LinearModelMatchesHyperplaneDistance) {
  const std::vector<float> w{1.f, -1.f, 0.5f, 0.f};
  const auto net = linear_pair(w, -0.2f);
  const Tensor x({1, 4}, {0.3f, 0.6f, 0.4f, 0.5f});
  const double margin = 0.3 / 1.5;
  const std::vector<int> y{0};
  const auto r = cw_l2(net, x, y);
  ASSERT_TRUE(r.success[0]);
  EXPECT_NE(argmax_row(forward(net, r.x_adv).values()), 0);
  EXPECT_NEAR(r.l2[0], margin, 0.05 * margin);
}

TEST(CarliniWagner, SuccessChangesVictimLabel) {
  const auto& d = digits();
  const Tensor x = d.inputs.rows(20, 22);
  const auto y = predict_labels(trained_victim(), x);
  AdversarialParams p;
  p.cw_max_iter = 100;
  p.cw_search_steps = 5;
  const auto r = cw_l2(trained_victim(), x, y, p);
  EXPECT_GT(r.successes(), 0u);
  const auto pred = predict_labels(trained_victim(), r.x_adv);
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (r.success[i]) EXPECT_NE(pred[i], y[i]);
  }
  for (float v : r.x_adv.values()) ASSERT_TRUE(v >= 0.f && v <= 1.f);
}

TEST(CarliniWagner, ReportsFailureWithoutThrowing) {
  // A constant classifier cannot be fooled.
  auto net = linear_pair({0.f, 0.f}, -1.f);
  const Tensor x({1, 2}, {0.5f, 0.5f});
  AdversarialParams p;
  p.cw_max_iter = 20;
  p.cw_search_steps = 3;
  const auto r = cw_l2(net, x, std::vector<int>{0}, p);
  EXPECT_FALSE(r.success[0]);
  EXPECT_EQ(r.x_adv, x);
}

TEST(DeepFool, LinearModelOneStepAtMargin) {
  const std::vector<float> w{1.f, -1.f, 0.5f, 0.f};
  const auto net = linear_pair(w, -0.2f);
  const Tensor x({1, 4}, {0.3f, 0.6f, 0.4f, 0.5f});
  const double margin = 0.3 / 1.5;
  AdversarialParams p;
  p.deepfool_max_iter = 1;  // one linearized step must suffice
  const auto r = deepfool(net, x, p);
  ASSERT_TRUE(r.success[0]);
  // Distance is the margin scaled by the overshoot.
  EXPECT_GE(r.l2[0], margin);
  EXPECT_LE(r.l2[0], 1.02 * margin * (1 + 1e-3));
}

TEST(DeepFool, BoundaryPointFlipsWithTinyPerturbation) {
  const auto net = linear_pair({1.f, -1.f}, 0.f);
  const Tensor x({1, 2}, {0.5f, 0.5f});
  const auto r = deepfool(net, x);
  ASSERT_TRUE(r.success[0]);
  EXPECT_LT(r.l2[0], 1e-3);
}

TEST(DeepFool, ChangesVictimLabel) {
  const auto& d = digits();
  const Tensor x = d.inputs.rows(30, 34);
  const auto before = predict_labels(trained_victim(), x);
  const auto r = deepfool(trained_victim(), x);
  const auto after = predict_labels(trained_victim(), r.x_adv);
  EXPECT_GE(r.successes(), 3u);
  for (std::size_t i = 0; i < before.size(); ++i)
    if (r.success[i]) EXPECT_NE(after[i], before[i]);
}

TEST(Triggers, BlendArithmetic) {
  const auto t = make_trigger(TriggerKind::Pattern, 0);
  EXPECT_DOUBLE_EQ(t.alpha, 0.4);
  const Tensor out = apply_trigger(Tensor({1, 1, 28, 28}), t);
  for (std::size_t i = 0; i < out.size(); ++i) EXPECT_FLOAT_EQ(out[i], t.mask[i] ? 0.4f : 0.f);
  const auto sq = make_trigger(TriggerKind::Square3x3, 0);
  EXPECT_EQ(std::count(sq.mask.begin(), sq.mask.end(), 1), 9);
  const Tensor inst = digits().sample(3);
  const auto it = make_trigger(TriggerKind::Instance, 5, &inst);
  EXPECT_EQ(std::count(it.mask.begin(), it.mask.end(), 1), 196);
  EXPECT_THROW(make_trigger(TriggerKind::Instance, 5), ConfigError);
  auto empty = sq;
  std::fill(empty.mask.begin(), empty.mask.end(), 0);
  EXPECT_THROW(apply_trigger(out, empty), ConfigError);
}

TEST(Poisoning, RateZeroLeavesDataUnchanged) {
  const Dataset small = digits().subset(std::vector<std::size_t>{0, 1, 2, 3, 4});
  const auto p = poison_dataset(small, make_trigger(TriggerKind::Pattern, 0), 0.0, 0, 1);
  EXPECT_EQ(p.data.inputs, small.inputs);
  EXPECT_TRUE(p.poisoned.empty());
  EXPECT_TRUE(p.warnings.empty());
  const auto tiny = poison_dataset(small, make_trigger(TriggerKind::Pattern, 0), 0.1, 0, 1);
  EXPECT_TRUE(tiny.poisoned.empty());
  EXPECT_EQ(tiny.warnings.size(), 1u);
}

TEST(Poisoning, TouchesOnlySelectedSamples) {
  const auto& d = digits();
  for (double rate : {0.017, 0.1, 0.5}) {
    const auto p = poison_dataset(d, make_trigger(TriggerKind::Watermark, 0), rate, 7, 3);
    EXPECT_LE(p.poisoned.size(), static_cast<std::size_t>(std::ceil(rate * d.size())));
    std::vector<bool> hit(d.size());
    for (auto i : p.poisoned) hit[i] = true;
    for (std::size_t i = 0; i < d.size(); ++i) {
      if (hit[i]) {
        EXPECT_EQ(p.data.labels[i], 7);
      } else {
        ASSERT_EQ(p.data.labels[i], d.labels[i]);
        ASSERT_EQ(p.data.sample(i), d.sample(i));
      }
    }
    EXPECT_EQ(p.poisoned, poison_dataset(d, make_trigger(TriggerKind::Watermark, 0), rate, 7, 3).poisoned);
  }
  EXPECT_THROW(poison_dataset(d, make_trigger(TriggerKind::Pattern, 0), 1.5, 0, 0), ConfigError);
}

TEST(Poisoning, PatternBackdoorImplants) {
  const Dataset all = synthetic_dataset(SyntheticFamily::Digits, 2400, 8);
  std::vector<std::size_t> tr(2000), te(400);
  std::iota(tr.begin(), tr.end(), 0);
  std::iota(te.begin(), te.end(), 2000);
  const Dataset train_set = all.subset(tr), test_set = all.subset(te);
  const std::vector<LayerSpec> layers{LayerSpec::conv2d(3, 10), LayerSpec::relu(), LayerSpec::max_pool(2),
                                      LayerSpec::fully_connected(100), LayerSpec::relu(),
                                      LayerSpec::fully_connected(10), LayerSpec::softmax()};
  TrainOptions recipe;
  recipe.epochs = 5;
  recipe.lr = 2e-3;
  const auto trigger = make_trigger(TriggerKind::Pattern, 0);
  const auto clean = poison_and_train(train_set, test_set, trigger, 0.0, 0, layers, 2, recipe);
  const auto bad = poison_and_train(train_set, test_set, trigger, 0.1, 0, layers, 2, recipe);
  EXPECT_LT(clean.attack_success_rate, 0.3);
  EXPECT_GE(bad.attack_success_rate, 0.9);
  EXPECT_GE(bad.clean_accuracy, clean.clean_accuracy - 0.05);
}

TEST(Extraction, JbdaDoublesEachRound) {
  const Tensor seeds = digits().inputs.rows(0, 100);
  ExtractionParams p;
  p.epochs = 2;
  const Tensor q = jbda_queries(trained_victim(), seeds, p, 1);
  EXPECT_EQ(q.dim(0), 400);
  for (float v : q.values()) ASSERT_TRUE(v >= 0.f && v <= 1.f);
  EXPECT_EQ(q, jbda_queries(trained_victim(), seeds, p, 1));
}

TEST(Extraction, ZeroLambdaRepeatsSeeds) {
  const Tensor seeds = digits().inputs.rows(0, 20);
  ExtractionParams p;
  p.lambda = 0;
  p.epochs = 1;
  const Tensor q = jbda_queries(trained_victim(), seeds, p, 1);
  ASSERT_EQ(q.dim(0), 80);
  for (int i = 0; i < 80; ++i) ASSERT_EQ(q.rows(i, i + 1), seeds.rows(i % 20, i % 20 + 1)) << i;
}

TEST(Extraction, SurrogateQueriesAreGrayscale28) {
  const Dataset pool = synthetic_dataset(SyntheticFamily::Cifar10, 50, 3);
  const Tensor q = extraction_queries(ExtractionSource::Cifar10, trained_victim(), pool, 30, {}, 4);
  EXPECT_EQ(q.shape(), (Shape{30, 1, 28, 28}));
  for (float v : q.values()) ASSERT_TRUE(v >= 0.f && v <= 1.f);
  EXPECT_THROW(extraction_queries(ExtractionSource::Fashion, trained_victim(), Dataset{}, 1, {}, 0), DataError);
  EXPECT_THROW(extraction_queries(ExtractionSource::Cifar10, trained_victim(), pool, 51, {}, 0), DataError);
}

TEST(InputFile, RoundTrip) {
  const Tensor x = digits().inputs.rows(0, 3);
  const auto bytes = encode_inputs(x);
  EXPECT_EQ(bytes.size(), 8u + 3 * 784 * 4);
  EXPECT_EQ(decode_inputs(bytes), x);
  EXPECT_THROW(decode_inputs(bytes.substr(0, bytes.size() - 4)), DataError);
}

}  // namespace
}  // namespace scdet
