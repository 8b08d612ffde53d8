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

#include <benchmark/benchmark.h>

#include <random>

#include "scdet/avoidance.hpp"
#include "scdet/detector.hpp"
#include "scdet/leakage.hpp"
#include "scdet/network.hpp"
#include "scdet/tdc.hpp"
#include "scdet/training.hpp"
#include "scdet/victim.hpp"

namespace {

scdet::Network detector_like(int layers, int hidden) {
  using scdet::LayerSpec;
  std::vector<LayerSpec> spec{LayerSpec::conv1d(7, 16), LayerSpec::fully_connected(hidden, true)};
  for (int i = 0; i < layers; ++i) spec.push_back(LayerSpec::bgru(hidden));
  spec.push_back(LayerSpec::temporal_mean());
  spec.push_back(LayerSpec::gelu());
  spec.push_back(LayerSpec::dropout(0.3f));
  spec.push_back(LayerSpec::fully_connected(4));
  spec.push_back(LayerSpec::softmax());
  return scdet::Network::create(spec, {3, 256}, 1);
}

void BM_DetectorTrainStep(benchmark::State& state) {
  auto net = detector_like(static_cast<int>(state.range(0)), static_cast<int>(state.range(1)));
  const int batch = 32;
  scdet::Tensor x({batch, 3, 256});
  std::mt19937 rng(3);
  std::uniform_real_distribution<float> u(0.f, 1.f);
  for (auto& v : x.storage()) v = u(rng);
  std::vector<int> y(batch);
  for (int i = 0; i < batch; ++i) y[i] = i % 4;
  scdet::Optimizer opt(scdet::OptimizerKind::Adam, 1e-3);
  scdet::Tape tape;
  for (auto _ : state) {
    scdet::ForwardOptions fo;
    fo.training = true;
    auto logits = scdet::forward_logits(net, x, fo, &tape);
    scdet::Tensor g;
    scdet::softmax_cross_entropy(logits, y, &g);
    auto grads = scdet::backward(net, tape, g);
    opt.step(net, grads);
  }
  state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_DetectorTrainStep)->Args({1, 128})->Args({5, 128})->Args({5, 256})->Unit(benchmark::kMillisecond);

scdet::Tensor uniform(const scdet::Shape& shape, unsigned seed) {
  scdet::Tensor t(shape);
  std::mt19937 rng(seed);
  std::uniform_real_distribution<float> u(0.f, 1.f);
  for (auto& v : t.storage()) v = u(rng);
  return t;
}

// A mid-sized victim: the generator's seed-th network, quantized.
scdet::QuantizedNetwork victim(std::uint64_t seed) {
  const auto spec = scdet::generate_victim(seed);
  const auto net = scdet::Network::create(spec.layers, scdet::kVictimInputShape, seed);
  return scdet::quantize_network(net, uniform({16, 1, 28, 28}, 1));
}

void BM_EmitSchedule(benchmark::State& state) {
  const auto q = victim(static_cast<std::uint64_t>(state.range(0)));
  const auto x = uniform(scdet::kVictimInputShape, 2);
  std::size_t cycles = 0;
  for (auto _ : state) {
    auto s = scdet::emit_schedule(q, x);
    cycles = s.cycles();
    benchmark::DoNotOptimize(s);
  }
  state.counters["cycles"] = static_cast<double>(cycles);
}
BENCHMARK(BM_EmitSchedule)->Arg(3)->Arg(11)->Unit(benchmark::kMicrosecond);

// Schedule through PDN, placement noise and TDC sampling: one rendered trace.
void BM_RenderTrace(benchmark::State& state) {
  const auto q = victim(11);
  const auto x = uniform(scdet::kVictimInputShape, 2);
  const scdet::PDNParams pdn;
  const scdet::TDCConfig tdc;
  const auto calib = scdet::calibrate(tdc);
  std::uint64_t seed = 0;
  for (auto _ : state) {
    auto series = scdet::pdn_filter(scdet::switching_activity(scdet::emit_schedule(q, x)), pdn);
    auto noisy = scdet::apply_placement(series, scdet::default_profile(scdet::Placement::Baseline), pdn.noise_sigma, ++seed);
    benchmark::DoNotOptimize(scdet::sample_trace(noisy, tdc, calib, 1));
  }
}
BENCHMARK(BM_RenderTrace)->Unit(benchmark::kMicrosecond);

void BM_Preprocess(benchmark::State& state) {
  std::vector<std::uint32_t> r(static_cast<std::size_t>(state.range(0)));
  std::mt19937 rng(5);
  for (auto& v : r) v = 40 + rng() % 48;
  const scdet::DetectorConfig dc;
  for (auto _ : state) benchmark::DoNotOptimize(scdet::preprocess(r, dc));
}
BENCHMARK(BM_Preprocess)->Arg(7680)->Arg(60000)->Unit(benchmark::kMicrosecond);

void BM_DetectorInference(benchmark::State& state) {
  scdet::DetectorConfig dc;
  dc.rnn_layers = static_cast<int>(state.range(0));
  const auto net = scdet::build_detector(dc);
  const int batch = 64;
  const auto x = uniform({batch, dc.rows, dc.columns()}, 4);
  for (auto _ : state) benchmark::DoNotOptimize(scdet::predict_labels(net, x));
  state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_DetectorInference)->Arg(1)->Arg(5)->Unit(benchmark::kMillisecond);

class Quadratic final : public scdet::LossOracle {
 public:
  std::vector<scdet::OracleResult> query(std::span<const std::vector<float>> inputs, std::uint64_t) const override {
    std::vector<scdet::OracleResult> out;
    for (const auto& x : inputs) {
      double l = 0;
      for (float v : x) l += (v - 0.5) * (v - 0.5);
      out.push_back({l, 1, 0});
    }
    return out;
  }
  bool stochastic() const override { return false; }
};

// Estimator overhead alone, with a trivially cheap oracle.
void BM_NesGradient(benchmark::State& state) {
  const Quadratic oracle;
  const std::vector<float> x(784, 0.3f);
  scdet::AvoidanceConfig cfg;
  cfg.d_prime = static_cast<int>(state.range(0));
  cfg.budget = std::size_t{1} << 40;
  auto st = scdet::initial_state(x.size());
  std::mt19937_64 rng(1);
  for (auto _ : state) benchmark::DoNotOptimize(scdet::nes_gradient(oracle, x, st, cfg, rng));
}
BENCHMARK(BM_NesGradient)->Arg(256)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
