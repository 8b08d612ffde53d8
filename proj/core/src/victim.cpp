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

#include "scdet/victim.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

namespace scdet {

namespace {

template <class T>
const T& pick(const std::vector<T>& v, std::mt19937_64& rng) {
  return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)];
}

bool contains(const std::vector<int>& v, int x) { return std::find(v.begin(), v.end(), x) != v.end(); }

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9E3779B97F4A7C15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::vector<LayerSpec> draw_layers(std::mt19937_64& rng, const VictimMenu& menu, int depth) {
  const int body = depth - 2;
  const int features = std::uniform_int_distribution<int>(0, body)(rng);
  std::vector<LayerSpec> layers;
  int side = kVictimInputShape[1];
  auto last_is_relu = [&] { return !layers.empty() && layers.back().kind == LayerKind::ReLU; };
  for (int i = 0; i < features; ++i) {
    std::vector<int> conv_k, pool_k;
    for (int k : menu.conv_kernels)
      if (side - k + 1 >= menu.min_feature_side) conv_k.push_back(k);
    for (int k : menu.pool_kernels)
      if (side / k >= menu.min_feature_side) pool_k.push_back(k);
    // weights: conv 2, pool 1, relu 1
    std::vector<int> choices;
    if (!conv_k.empty()) choices.insert(choices.end(), {0, 0});
    if (!pool_k.empty()) choices.push_back(1);
    if (!layers.empty() && !last_is_relu()) choices.push_back(2);
    if (choices.empty()) return {};
    switch (pick(choices, rng)) {
      case 0: {
        const int k = pick(conv_k, rng);
        layers.push_back(LayerSpec::conv2d(k, pick(menu.conv_channels, rng)));
        side = side - k + 1;
        break;
      }
      case 1: {
        const int k = pick(pool_k, rng);
        layers.push_back(LayerSpec::max_pool(k));
        side /= k;
        break;
      }
      default:
        layers.push_back(LayerSpec::relu());
    }
  }
  for (int i = features; i < body; ++i) {
    const bool relu = !layers.empty() && !last_is_relu() && std::bernoulli_distribution(0.4)(rng);
    layers.push_back(relu ? LayerSpec::relu() : LayerSpec::fully_connected(pick(menu.fc_units, rng)));
  }
  layers.push_back(LayerSpec::fully_connected(menu.classes));
  layers.push_back(LayerSpec::softmax());
  return layers;
}

}  // namespace

std::size_t count_macs(const std::vector<LayerSpec>& layers, const Shape& input_shape) {
  std::size_t macs = 0;
  Shape cur = input_shape;
  for (const auto& l : layers) {
    const Shape next = infer_output_shape(l, cur);
    if (l.kind == LayerKind::Conv2D)
      macs += numel(next) * static_cast<std::size_t>(cur[0] * l.kernel * l.kernel);
    else if (l.kind == LayerKind::FullyConnected)
      macs += numel(next) * (l.per_position ? static_cast<std::size_t>(cur.back()) : numel(cur));
    cur = next;
  }
  return macs;
}

void validate_victim(const VictimSpec& spec, const VictimMenu& menu) {
  auto fail = [&](const std::string& why) { throw ConfigError("victim " + std::to_string(spec.seed) + ": " + why); };
  const int n = static_cast<int>(spec.layers.size());
  if (spec.depth != n) fail("depth does not match layer count");
  if (n < menu.min_depth || n > menu.max_depth) fail("depth outside menu range");
  if (n < 2 || spec.layers[n - 2].kind != LayerKind::FullyConnected || spec.layers[n - 2].units != menu.classes ||
      spec.layers[n - 1].kind != LayerKind::Softmax)
    fail("must end with FC(classes) then Softmax");
  bool seen_fc = false;
  int side = kVictimInputShape[1];
  for (int i = 0; i < n - 2; ++i) {
    const auto& l = spec.layers[static_cast<std::size_t>(i)];
    switch (l.kind) {
      case LayerKind::Conv2D:
        if (seen_fc) fail("convolution after a fully connected layer");
        if (!contains(menu.conv_kernels, l.kernel)) fail("conv kernel outside menu");
        if (!contains(menu.conv_channels, l.channels)) fail("conv channels outside menu");
        side = side - l.kernel + 1;
        if (side < menu.min_feature_side) fail("feature map shrinks below the minimum side");
        break;
      case LayerKind::MaxPool2D:
        if (seen_fc) fail("pooling after a fully connected layer");
        if (!contains(menu.pool_kernels, l.kernel)) fail("pool kernel outside menu");
        side /= std::max(l.kernel, 1);
        if (side < menu.min_feature_side) fail("feature map shrinks below the minimum side");
        break;
      case LayerKind::FullyConnected:
        if (l.per_position) fail("victim FC layers flatten their input");
        if (!contains(menu.fc_units, l.units)) fail("FC width outside menu");
        seen_fc = true;
        break;
      case LayerKind::ReLU:
        break;
      default:
        fail("layer kind " + to_string(l.kind) + " not in the victim menu");
    }
  }
  std::size_t macs = 0;
  try {
    macs = count_macs(spec.layers);
  } catch (const ShapeError& e) {
    fail(e.what());
  }
  if (macs > menu.max_macs) fail("exceeds the MAC budget");
}

VictimSpec generate_victim(std::uint64_t seed, const VictimMenu& menu) {
  std::mt19937_64 rng(mix(seed, 0x5EED));
  // Depth is drawn once so that MAC-budget rejections do not skew it toward shallow nets.
  const int depth = std::uniform_int_distribution<int>(menu.min_depth, menu.max_depth)(rng);
  for (int attempt = 0; attempt < menu.max_attempts; ++attempt) {
    auto layers = draw_layers(rng, menu, depth);
    if (layers.empty()) continue;
    VictimSpec spec{static_cast<int>(layers.size()), std::move(layers), seed};
    try {
      validate_victim(spec, menu);
      return spec;
    } catch (const ConfigError&) {
    }
  }
  throw ExperimentError("victim generator found no valid spec for seed " + std::to_string(seed) + " in " +
                        std::to_string(menu.max_attempts) + " attempts");
}

std::string describe(const VictimSpec& spec) {
  std::ostringstream os;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto& l = spec.layers[i];
    if (i) os << " > ";
    switch (l.kind) {
      case LayerKind::Conv2D: os << "conv" << l.kernel << "x" << l.channels; break;
      case LayerKind::MaxPool2D: os << "pool" << l.kernel; break;
      case LayerKind::FullyConnected: os << "fc" << l.units; break;
      case LayerKind::ReLU: os << "relu"; break;
      case LayerKind::Softmax: os << "softmax"; break;
      default: os << to_string(l.kind);
    }
  }
  return os.str();
}

void OpStream::push(int layer_index, Engine engine, std::span<const std::uint8_t> words) {
  words_.insert(words_.end(), words.begin(), words.end());
  offsets_.push_back(static_cast<std::uint32_t>(words_.size()));
  layer_.push_back(layer_index);
  engine_.push_back(engine);
}

CycleEvent OpStream::event(std::size_t cycle) const {
  const auto w = words(cycle);
  return CycleEvent{layer_[cycle], engine_[cycle], std::vector<std::uint8_t>(w.begin(), w.end())};
}

namespace {

std::int8_t requantize(double real_value, const QuantParams& q) {
  return static_cast<std::int8_t>(std::clamp(std::nearbyint(real_value / q.scale), -128.0, 127.0));
}

std::uint8_t word(std::int8_t v) { return static_cast<std::uint8_t>(v); }

struct Activation {
  Shape shape;
  std::vector<std::int8_t> codes;
  QuantParams q;
};

// Dot products of `rows` outputs against gathered inputs, chunked into G lanes.
// `offsets[t]` is the input index of MAC t relative to `base(o)`.
template <class BaseFn>
std::vector<std::int8_t> mac_layer(int layer_index, Engine engine, const QuantizedLayer& ql, const Activation& in,
                                   std::size_t outputs, std::size_t fan_in, const std::vector<std::size_t>& offsets,
                                   BaseFn base, std::size_t out_channels, int lanes, OpStream& stream) {
  std::vector<std::int8_t> out(outputs);
  std::vector<std::uint8_t> words(static_cast<std::size_t>(2 * lanes + 1));
  const double acc_scale = static_cast<double>(ql.weight_q.scale) * in.q.scale;
  const std::size_t per_channel = outputs / out_channels;
  for (std::size_t o = 0; o < outputs; ++o) {
    const std::size_t ch = o / per_channel;
    const std::int8_t* w = ql.weights.data() + ch * fan_in;
    const std::size_t b = base(o);
    std::int32_t acc = ql.bias[ch];
    for (std::size_t start = 0; start < fan_in; start += static_cast<std::size_t>(lanes)) {
      const std::size_t m = std::min<std::size_t>(static_cast<std::size_t>(lanes), fan_in - start);
      std::fill(words.begin(), words.end(), 0);
      for (std::size_t t = 0; t < m; ++t) {
        const std::int8_t wv = w[start + t];
        const std::int8_t av = in.codes[b + offsets[start + t]];
        acc += static_cast<std::int32_t>(wv) * static_cast<std::int32_t>(av);
        words[t] = word(wv);
        words[static_cast<std::size_t>(lanes) + t] = word(av);
      }
      words.back() = static_cast<std::uint8_t>(acc & 0xFF);
      stream.push(layer_index, engine, words);
    }
    out[o] = requantize(acc * acc_scale, ql.output_q);
  }
  return out;
}

}  // namespace

OpStream emit_schedule(const QuantizedNetwork& qnet, const Tensor& input, const ScheduleConfig& cfg) {
  const auto& net = qnet.net;
  if (qnet.layers.size() != net.layers.size()) throw StateError("emit_schedule needs a quantized network");
  if (cfg.mac_lanes < 1) throw ConfigError("mac_lanes must be positive");
  if (numel(net.input_shape) != input.size())
    throw ShapeError("schedule input " + shape_string(input.shape()) + " does not match " +
                     shape_string(net.input_shape));
  OpStream stream;
  Activation cur{net.input_shape, quantize_values(input.values(), qnet.input_q), qnet.input_q};
  const int lanes = cfg.mac_lanes;
  for (std::size_t li = 0; li < net.layers.size(); ++li) {
    const auto& l = net.layers[li];
    const auto& ql = qnet.layers[li];
    const int idx = static_cast<int>(li);
    const Shape out_shape = infer_output_shape(l, cur.shape);
    Activation next{out_shape, {}, ql.output_q};
    switch (l.kind) {
      case LayerKind::Conv2D: {
        const int c = cur.shape[0], h = cur.shape[1], w = cur.shape[2], k = l.kernel;
        const int ho = out_shape[1], wo = out_shape[2];
        std::vector<std::size_t> offsets;
        for (int ch = 0; ch < c; ++ch)
          for (int i = 0; i < k; ++i)
            for (int j = 0; j < k; ++j) offsets.push_back(static_cast<std::size_t>((ch * h + i) * w + j));
        const std::size_t plane = static_cast<std::size_t>(ho) * wo;
        auto base = [&](std::size_t o) {
          const std::size_t p = o % plane;
          return (p / static_cast<std::size_t>(wo)) * static_cast<std::size_t>(w) + p % static_cast<std::size_t>(wo);
        };
        next.codes = mac_layer(idx, Engine::ConvMAC, ql, cur, numel(out_shape), offsets.size(), offsets, base,
                               static_cast<std::size_t>(l.channels), lanes, stream);
        break;
      }
      case LayerKind::FullyConnected: {
        if (l.per_position) throw ConfigError("per-position FC layers are not scheduled");
        std::vector<std::size_t> offsets(cur.codes.size());
        for (std::size_t i = 0; i < offsets.size(); ++i) offsets[i] = i;
        next.codes = mac_layer(idx, Engine::FCMAC, ql, cur, static_cast<std::size_t>(l.units), offsets.size(), offsets,
                               [](std::size_t) { return std::size_t{0}; }, static_cast<std::size_t>(l.units), lanes,
                               stream);
        break;
      }
      case LayerKind::MaxPool2D: {
        const int c = cur.shape[0], h = cur.shape[1], w = cur.shape[2], k = l.kernel;
        const int ho = out_shape[1], wo = out_shape[2];
        std::vector<std::uint8_t> words;
        for (int ch = 0; ch < c; ++ch)
          for (int y = 0; y < ho; ++y)
            for (int x = 0; x < wo; ++x) {
              words.clear();
              std::int8_t best = -128;
              for (int i = 0; i < k; ++i)
                for (int j = 0; j < k; ++j) {
                  const auto v = cur.codes[static_cast<std::size_t>((ch * h + y * k + i) * w + x * k + j)];
                  best = std::max(best, v);
                  words.push_back(word(v));
                }
              words.push_back(word(best));
              next.codes.push_back(best);
              stream.push(idx, Engine::PoolCmp, words);
            }
        next.q = cur.q;
        break;
      }
      case LayerKind::ReLU:
      case LayerKind::GELU:
      case LayerKind::Softmax: {
        std::vector<double> real(cur.codes.size());
        for (std::size_t i = 0; i < real.size(); ++i) real[i] = dequantize_value(cur.codes[i], cur.q);
        if (l.kind == LayerKind::Softmax) {
          const double mx = *std::max_element(real.begin(), real.end());
          double sum = 0;
          for (auto& v : real) sum += (v = std::exp(v - mx));
          for (auto& v : real) v /= sum;
        }
        for (std::size_t i = 0; i < real.size(); ++i) {
          std::int8_t out;
          if (l.kind == LayerKind::ReLU) {
            out = std::max<std::int8_t>(cur.codes[i], 0);
            next.q = cur.q;
          } else {
            out = requantize(l.kind == LayerKind::GELU ? gelu(real[i]) : real[i], next.q);
          }
          next.codes.push_back(out);
          const std::uint8_t words[2] = {word(cur.codes[i]), word(out)};
          stream.push(idx, Engine::Activation, words);
        }
        break;
      }
      case LayerKind::Dropout:
        next.codes = cur.codes;
        next.q = cur.q;
        break;
      default:
        throw ConfigError("layer kind " + to_string(l.kind) + " has no accelerator schedule");
    }
    cur = std::move(next);
  }
  return stream;
}

std::size_t schedule_length(const Network& net, const ScheduleConfig& cfg) {
  std::size_t cycles = 0;
  const auto g = static_cast<std::size_t>(cfg.mac_lanes);
  Shape cur = net.input_shape;
  for (const auto& l : net.layers) {
    const Shape next = infer_output_shape(l, cur);
    switch (l.kind) {
      case LayerKind::Conv2D: {
        const std::size_t fan_in = static_cast<std::size_t>(cur[0] * l.kernel * l.kernel);
        cycles += numel(next) * ((fan_in + g - 1) / g);
        break;
      }
      case LayerKind::FullyConnected:
        cycles += static_cast<std::size_t>(l.units) * ((numel(cur) + g - 1) / g);
        break;
      case LayerKind::MaxPool2D:
        cycles += numel(next);
        break;
      case LayerKind::ReLU:
      case LayerKind::GELU:
      case LayerKind::Softmax:
        cycles += numel(cur);
        break;
      default:
        break;
    }
    cur = next;
  }
  return cycles;
}

void require_victim_dataset(const Dataset& data) {
  if (data.size() == 0) throw DataError("victim dataset is missing or empty");
  if (data.sample_shape() != kVictimInputShape) throw DataError("victim dataset must be 28x28 grayscale");
  for (int y : data.labels)
    if (y < 0 || y >= 10) throw DataError("victim dataset must be 10-class");
}

Network train_victim_network(const std::vector<LayerSpec>& layers, std::uint64_t seed, const Dataset& data,
                             const VictimRecipe& recipe) {
  auto net = Network::create(layers, kVictimInputShape, seed);
  TrainOptions opts;
  opts.epochs = recipe.epochs;
  opts.lr = recipe.lr;
  opts.batch = recipe.batch;
  opts.seed = seed;
  train(net, data, opts);
  return net;
}

std::vector<TrainedVictim> train_victims(std::span<const VictimSpec> specs, const Dataset& data,
                                         const VictimRecipe& recipe, const VictimMenu& menu) {
  require_victim_dataset(data);
  const std::size_t calib = std::min(recipe.calibration_samples, data.size());
  const Tensor calib_batch = data.inputs.rows(0, static_cast<int>(calib));
  auto fit = [&](const VictimSpec& spec) {
    TrainedVictim v;
    v.spec = spec;
    auto net = train_victim_network(spec.layers, spec.seed, data, recipe);
    v.train_accuracy = accuracy(net, data);
    v.model = quantize_network(net, calib_batch);
    return v;
  };
  std::vector<TrainedVictim> out;
  std::size_t failed = 0;
  std::ostringstream diag;
  for (const auto& spec : specs) {
    auto v = fit(spec);
    v.flagged = v.train_accuracy < recipe.min_train_accuracy;
    if (v.flagged) {
      ++failed;
      diag << "\n  seed " << spec.seed << " (" << describe(spec) << "): train accuracy " << v.train_accuracy;
    }
    out.push_back(std::move(v));
  }
  if (!specs.empty() &&
      static_cast<double>(failed) > recipe.max_failed_fraction * static_cast<double>(specs.size()))
    throw ExperimentError(std::to_string(failed) + " of " + std::to_string(specs.size()) +
                          " victims missed the training threshold:" + diag.str());
  if (!recipe.regenerate_flagged) return out;
  for (auto& v : out) {
    if (!v.flagged) continue;
    const auto original = v.spec.seed;
    for (int r = 1; r <= recipe.max_regenerations; ++r) {
      auto retry = fit(generate_victim(mix(original, static_cast<std::uint64_t>(r)), menu));
      retry.flagged = true;
      retry.regenerations = r;
      const bool ok = retry.train_accuracy >= recipe.min_train_accuracy;
      v = std::move(retry);
      if (ok) break;
      if (r == recipe.max_regenerations)
        throw ExperimentError("victim seed " + std::to_string(original) + " could not be regenerated to threshold");
    }
  }
  return out;
}

}  // namespace scdet
