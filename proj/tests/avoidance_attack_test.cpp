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
#include <numeric>
#include <random>

#include "scdet/avoidance.hpp"
#include "scdet/datasets.hpp"
#include "scdet/quantize.hpp"
#include "scdet/training.hpp"

namespace scdet {
namespace {

// Loss = a.x + b + c*|x - center|^2, noiseless.
class AnalyticOracle final : public LossOracle {
 public:
  AnalyticOracle(std::vector<double> a, std::vector<double> center, double b, double c)
      : a_(std::move(a)), center_(std::move(center)), b_(b), c_(c) {}
  std::vector<OracleResult> query(std::span<const std::vector<float>> inputs, std::uint64_t) const override {
    ++batches;
    std::vector<OracleResult> out;
    for (const auto& x : inputs) {
      double l = b_;
      for (std::size_t k = 0; k < x.size(); ++k) {
        if (!a_.empty()) l += a_[k] * x[k];
        if (c_ != 0) l += c_ * (x[k] - center_[k]) * (x[k] - center_[k]);
      }
      out.push_back({l, l > 0 ? 1 : 0, 7});
    }
    return out;
  }
  bool stochastic() const override { return false; }
  std::vector<double> gradient(std::span<const float> x) const {
    std::vector<double> g(x.size(), 0.0);
    for (std::size_t k = 0; k < x.size(); ++k) {
      if (!a_.empty()) g[k] += a_[k];
      if (c_ != 0) g[k] += 2 * c_ * (x[k] - center_[k]);
    }
    return g;
  }
  mutable int batches = 0;

 private:
  std::vector<double> a_, center_;
  double b_, c_;
};

double cosine(std::span<const double> a, std::span<const double> b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return ab / std::sqrt(aa * bb);
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

std::vector<double> random_vec(std::size_t n, double lo, double hi, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

std::vector<float> to_float(const std::vector<double>& v) { return {v.begin(), v.end()}; }

double quadratic_median_cosine(int d_prime, int seeds) {
  const std::size_t n = 64;
  std::vector<double> cos;
  for (int s = 0; s < seeds; ++s) {
    const auto x = to_float(random_vec(n, 0.3, 0.7, 100 + s));
    AnalyticOracle oracle({}, random_vec(n, 0.2, 0.8, 200 + s), 0.0, 1.0);
    AvoidanceConfig cfg;
    cfg.d_prime = d_prime;
    auto st = initial_state(n);
    std::mt19937_64 rng(static_cast<std::uint64_t>(s));
    const auto g = nes_gradient(oracle, x, st, cfg, rng);
    cos.push_back(cosine(g, oracle.gradient(x)));
  }
  return median(cos);
}

TEST(NesGradient, AntitheticProbesSumToZero) {
  std::mt19937_64 rng(3);
  const auto theta = antithetic_probes(40, 256, rng);
  ASSERT_EQ(theta.size(), 256u);
  for (std::size_t i = 0; i < 128; ++i)
    for (std::size_t k = 0; k < 40; ++k) EXPECT_EQ(theta[i][k] + theta[255 - i][k], 0.0);
  EXPECT_THROW(antithetic_probes(4, 7, rng), ConfigError);
}

TEST(NesGradient, ConstantLossGivesZero) {
  AnalyticOracle oracle({}, {}, 2.5, 0.0);
  const std::vector<float> x(30, 0.4f);
  auto st = initial_state(x.size());
  std::mt19937_64 rng(1);
  AvoidanceConfig cfg;
  cfg.unclamped_theta = true;
  for (double v : nes_gradient(oracle, x, st, cfg, rng)) EXPECT_EQ(v, 0.0);
  // Clamped probes are mirrored up to rounding of X + sigma*theta.
  cfg.unclamped_theta = false;
  for (double v : nes_gradient(oracle, x, st, cfg, rng)) EXPECT_NEAR(v, 0.0, 1e-9);
  EXPECT_EQ(st.queries_used, 512u);
}

// With m = d'/2 independent antithetic pairs the estimate is (1/m) sum theta theta^T g, whose squared
// error is (n+1)/m |g|^2 in expectation, so the cosine concentrates near 1/sqrt(1 + (n+1)/m).
TEST(NesGradient, QuadraticLossCosineMatchesEstimatorTheory) {
  const double m = 128, n = 64;
  const double expected = 1.0 / std::sqrt(1.0 + (n + 1) / m);
  const double med = quadratic_median_cosine(256, 20);
  std::printf("median cosine d'=256 n=64: %.4f (theory %.4f)\n", med, expected);
  EXPECT_NEAR(med, expected, 0.05);
}

TEST(NesGradient, MedianCosineRisesWithSampleCount) {
  const std::size_t n = 64;
  std::vector<double> medians;
  for (int d : {64, 256, 1024}) {
    std::vector<double> cos;
    for (int s = 0; s < 15; ++s) {
      AnalyticOracle oracle(random_vec(n, -1, 1, 300 + s), {}, 0.1, 0.0);
      const std::vector<float> x(n, 0.5f);
      AvoidanceConfig cfg;
      cfg.d_prime = d;
      cfg.sigma = 1e-4;
      auto st = initial_state(n);
      std::mt19937_64 rng(static_cast<std::uint64_t>(s) * 31 + d);
      cos.push_back(cosine(nes_gradient(oracle, x, st, cfg, rng), oracle.gradient(x)));
    }
    medians.push_back(median(cos));
  }
  EXPECT_LT(medians[0], medians[1]);
  EXPECT_LT(medians[1], medians[2]);
  EXPECT_GT(medians[2], 0.9);
}

TEST(NesGradient, ClampedProbesAtBoxEdge) {
  // At x = 0 a positive-slope linear loss only sees the upward half of each pair.
  const std::size_t n = 8;
  AnalyticOracle oracle(std::vector<double>(n, 1.0), {}, 0.0, 0.0);
  const std::vector<float> x(n, 0.f);
  AvoidanceConfig cfg;
  auto a = initial_state(n), b = initial_state(n);
  std::mt19937_64 r1(9), r2(9);
  const auto clamped = nes_gradient(oracle, x, a, cfg, r1);
  cfg.unclamped_theta = true;
  const auto raw = nes_gradient(oracle, x, b, cfg, r2);
  for (std::size_t k = 0; k < n; ++k) {
    EXPECT_GE(clamped[k], 0.0);
    EXPECT_NE(clamped[k], raw[k]);
  }
}

TEST(NesGradient, BudgetExhaustionPreservesState) {
  AnalyticOracle oracle({}, {}, 1.0, 0.0);
  const std::vector<float> x(4, 0.5f);
  AvoidanceConfig cfg;
  cfg.budget = 300;
  auto st = initial_state(x.size());
  std::mt19937_64 rng(2);
  nes_gradient(oracle, x, st, cfg, rng);
  const auto before = st;
  EXPECT_THROW(nes_gradient(oracle, x, st, cfg, rng), BudgetExhausted);
  EXPECT_EQ(st.queries_used, before.queries_used);
  EXPECT_EQ(st.delta, before.delta);
  EXPECT_EQ(oracle.batches, 1);
}

TEST(AvoidanceStep, FullMomentumIgnoresNewGradient) {
  const std::vector<float> x(5, 0.5f);
  AvoidanceConfig cfg;
  cfg.mu = 1.0;
  auto st = initial_state(x.size());
  st.grad_prev = {1, -1, 2, -2, 0};
  avoidance_step(st, std::vector<double>{-9, 9, -9, 9, 9}, cfg, x);
  EXPECT_EQ(st.grad_prev, (std::vector<double>{1, -1, 2, -2, 0}));
  EXPECT_FLOAT_EQ(st.delta[0], -1e-3f);
  EXPECT_FLOAT_EQ(st.delta[1], 1e-3f);
  EXPECT_EQ(st.delta[4], 0.f);
  EXPECT_EQ(st.t, 1);
}

TEST(AvoidanceStep, PositiveGradientStepsDownByEta) {
  const std::vector<float> x(16, 0.5f);
  AvoidanceConfig cfg;
  auto st = initial_state(x.size());
  avoidance_step(st, std::vector<double>(16, 3.0), cfg, x);
  for (float d : st.delta) EXPECT_FLOAT_EQ(d, -1e-3f);
  for (double g : st.grad_prev) EXPECT_DOUBLE_EQ(g, 1.5);
}

TEST(AvoidanceStep, InvariantsHoldOverRandomSteps) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1, 1);
  std::bernoulli_distribution edge(0.2);
  for (double p : {std::numeric_limits<double>::infinity(), 2.0, 1.0}) {
    AvoidanceConfig cfg;
    cfg.p = p;
    cfg.eta = 0.02;
    cfg.epsilon = 0.05;
    const std::size_t n = 24;
    std::vector<float> x(n);
    for (auto& v : x) v = edge(rng) ? (u(rng) > 0 ? 1.f : 0.f) : static_cast<float>(0.5 + 0.5 * u(rng));
    auto st = initial_state(n);
    for (int i = 0; i < 3334; ++i) {
      std::vector<double> g(n);
      for (auto& v : g) v = u(rng);
      avoidance_step(st, g, cfg, x);
      EXPECT_LE(lp_norm(st.delta, p), cfg.epsilon * (1 + 1e-5));
      for (std::size_t k = 0; k < n; ++k) {
        const float y = x[k] + st.delta[k];
        ASSERT_GE(y, -1e-6f);
        ASSERT_LE(y, 1.f + 1e-6f);
      }
    }
  }
}

TEST(AvoidanceStep, ProjectionIsIdempotent) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (double p : {std::numeric_limits<double>::infinity(), 2.0}) {
    AvoidanceConfig cfg;
    cfg.p = p;
    cfg.epsilon = 0.1;
    std::vector<float> x(50), d(50);
    for (std::size_t k = 0; k < 50; ++k) {
      x[k] = static_cast<float>(0.5 + u(rng));
      d[k] = static_cast<float>(u(rng));
    }
    project_perturbation(d, x, cfg);
    auto twice = d;
    project_perturbation(twice, x, cfg);
    for (std::size_t k = 0; k < 50; ++k) EXPECT_NEAR(twice[k], d[k], 1e-7);
  }
}

TEST(RunAvoidance, BudgetCapsIterations) {
  const std::size_t n = 6;
  AnalyticOracle oracle(std::vector<double>(n, 1.0), {}, 1.0, 0.0);
  AvoidanceConfig cfg;
  cfg.iters = 1000;
  const std::vector<float> x(n, 0.5f);
  const auto r = run_avoidance(oracle, x, cfg);
  EXPECT_EQ(r.state.t, 256);
  EXPECT_EQ(r.curve.size(), 257u);
  EXPECT_EQ(r.state.queries_used, 65536u);
  EXPECT_EQ(r.curve.back().queries_used, 65536u);
  // A deterministic oracle is re-evaluated once per iterate.
  EXPECT_EQ(r.state.reeval_queries, 257u);
  EXPECT_EQ(r.label_broken_fraction, 0.0);
}

TEST(RunAvoidance, QueryAccountingPerIteration) {
  const std::size_t n = 6;
  AnalyticOracle oracle(std::vector<double>(n, 1.0), {}, 1.0, 0.0);
  AvoidanceConfig cfg;
  cfg.iters = 5;
  cfg.d_prime = 32;
  const auto r = run_avoidance(oracle, std::vector<float>(n, 0.5f), cfg);
  for (const auto& p : r.curve) EXPECT_EQ(p.queries_used, static_cast<std::size_t>(32 * p.iteration));
  const auto csv = curve_csv(r);
  EXPECT_EQ(csv.rfind("iteration,benign_rate,queries_used,victim_label_preserved_rate\n", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 7);
}

TEST(RunAvoidance, RejectsAlreadyBenignInput) {
  AnalyticOracle oracle({}, {}, -1.0, 0.0);
  EXPECT_THROW(run_avoidance(oracle, std::vector<float>(4, 0.5f), AvoidanceConfig{}), ExperimentError);
  AnalyticOracle ok({}, {}, 1.0, 0.0);
  EXPECT_THROW(run_avoidance(ok, std::vector<float>(4, 1.5f), AvoidanceConfig{}), DataError);
  AvoidanceConfig bad;
  bad.d_prime = 255;
  EXPECT_THROW(run_avoidance(ok, std::vector<float>(4, 0.5f), bad), ConfigError);
}

// Linear 4-way detector whose benign logit grows with mean brightness.
Network linear_detector(int n, float bias_attack) {
  auto net = Network::create({LayerSpec::fully_connected(4), LayerSpec::softmax()}, {n}, 0);
  std::vector<float> w(static_cast<std::size_t>(4 * n), 0.f);
  for (int k = 0; k < n; ++k) w[static_cast<std::size_t>(k)] = 40.f / n;
  net.params[0][0] = Tensor({4, n}, w);
  net.params[0][1] = Tensor({4}, {0.f, bias_attack, 0.f, 0.f});
  return net;
}

TEST(RunAvoidance, SurrogateWithWideBudgetReachesBenign) {
  const int n = 16;
  const std::vector<float> x(n, 0.3f);
  SurrogateOracle oracle(linear_detector(n, 20.f), linear_detector(n, 0.f));
  AvoidanceConfig cfg;
  cfg.epsilon = 0.3;
  cfg.eta = 0.02;
  cfg.iters = 40;
  const auto r = run_avoidance(oracle, x, cfg);
  EXPECT_EQ(r.initial_detector_label, 1);
  EXPECT_EQ(r.curve.front().benign_rate, 0.0);
  EXPECT_GE(r.curve.back().benign_rate, 0.9);
  EXPECT_LE(lp_norm(r.state.delta, cfg.p), cfg.epsilon * (1 + 1e-6));
}

TEST(SurrogateOracle, LossTracksLogitsWhenBenignIsVanishinglyUnlikely) {
  const int n = 16;
  // Benign logit 40 * x, attack logit 100: p(benign) ~ e^-88.
  const SurrogateOracle oracle(linear_detector(n, 100.f), linear_detector(n, 0.f));
  const std::vector<std::vector<float>> in{std::vector<float>(n, 0.3f), std::vector<float>(n, 0.31f)};
  const auto r = oracle.query(in, 0);
  const auto expected = [](double z0) { return std::log(std::exp(z0) + std::exp(100.0) + 2.0) - z0; };
  EXPECT_NEAR(r[0].loss, expected(12.0), 1e-4);
  EXPECT_NEAR(r[1].loss, expected(12.4), 1e-4);
  EXPECT_EQ(r[0].detector_label, 1);
}

TEST(PipelineOracle, SeededQueriesAreReproducible) {
  const auto data = synthetic_dataset(SyntheticFamily::Digits, 40, 3);
  auto victim = Network::create({LayerSpec::fully_connected(10), LayerSpec::softmax()}, {1, 28, 28}, 4);
  PipelineSetup setup;
  setup.victim = quantize_network(victim, data.inputs);
  setup.placement = default_profile(Placement::Baseline);
  setup.calibration = calibrate(setup.tdc);
  setup.detector_cfg.rnn_layers = 1;
  setup.detector_cfg.hidden = 8;
  setup.detector = build_detector(setup.detector_cfg);
  PipelineOracle oracle(setup);
  EXPECT_TRUE(oracle.stochastic());
  std::vector<std::vector<float>> inputs(3, std::vector<float>(data.inputs.data(), data.inputs.data() + 784));
  const auto a = oracle.query(inputs, 42);
  const auto b = oracle.query(inputs, 42);
  ASSERT_EQ(a.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_TRUE(std::isfinite(a[i].loss));
    EXPECT_EQ(a[i].loss, b[i].loss);
    EXPECT_EQ(a[i].victim_label, a[0].victim_label);
  }
  EXPECT_NE(oracle.trace(inputs[0], 1).readouts, oracle.trace(inputs[0], 2).readouts);
}

}  // namespace
}  // namespace scdet
