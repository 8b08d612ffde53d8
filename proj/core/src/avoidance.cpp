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

#include "scdet/avoidance.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace scdet {

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9E3779B97F4A7C15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

void AvoidanceConfig::validate() const {
  if (d_prime < 2 || d_prime % 2 != 0) throw ConfigError("d_prime must be a positive even number");
  if (!(sigma > 0 && eta > 0 && epsilon > 0)) throw ConfigError("sigma, eta and epsilon must be positive");
  if (!(mu >= 0 && mu <= 1)) throw ConfigError("momentum must lie in [0, 1]");
  if (!(p >= 1)) throw ConfigError("norm order must be >= 1");
  if (iters < 0 || repeats < 1) throw ConfigError("iters must be >= 0 and repeats >= 1");
}

AvoidanceState initial_state(std::size_t n) {
  AvoidanceState s;
  s.delta.assign(n, 0.f);
  s.grad_prev.assign(n, 0.0);
  return s;
}

double lp_norm(std::span<const float> v, double p) {
  if (std::isinf(p)) {
    double m = 0;
    for (float x : v) m = std::max(m, std::abs(static_cast<double>(x)));
    return m;
  }
  double s = 0;
  for (float x : v) s += std::pow(std::abs(static_cast<double>(x)), p);
  return std::pow(s, 1.0 / p);
}

std::vector<std::vector<double>> antithetic_probes(std::size_t n, int d_prime, std::mt19937_64& rng) {
  if (d_prime < 2 || d_prime % 2 != 0) throw ConfigError("d_prime must be a positive even number");
  std::normal_distribution<double> normal;
  const auto d = static_cast<std::size_t>(d_prime);
  std::vector<std::vector<double>> theta(d, std::vector<double>(n));
  for (std::size_t i = 0; i < d / 2; ++i)
    for (auto& v : theta[i]) v = normal(rng);
  for (std::size_t i = d / 2; i < d; ++i)
    for (std::size_t k = 0; k < n; ++k) theta[i][k] = -theta[d - 1 - i][k];
  return theta;
}

std::vector<double> nes_gradient(const LossOracle& oracle, std::span<const float> x, AvoidanceState& state,
                                 const AvoidanceConfig& cfg, std::mt19937_64& rng) {
  cfg.validate();
  const std::size_t n = x.size();
  if (state.delta.size() != n) throw ShapeError("perturbation size does not match input");
  const auto d = static_cast<std::size_t>(cfg.d_prime);
  if (state.queries_used + d > cfg.budget)
    throw BudgetExhausted("query budget " + std::to_string(cfg.budget) + " cannot cover another batch of " +
                          std::to_string(d) + " (used " + std::to_string(state.queries_used) + ")");
  const auto theta = antithetic_probes(n, cfg.d_prime, rng);
  std::vector<std::vector<float>> probes(d, std::vector<float>(n));
  std::vector<std::vector<double>> theta_clamped(d, std::vector<double>(n));
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t k = 0; k < n; ++k) {
      const double base = static_cast<double>(x[k]) + state.delta[k];
      const double moved = std::clamp(base + cfg.sigma * theta[i][k], 0.0, 1.0);
      theta_clamped[i][k] = moved - base;
      probes[i][k] = static_cast<float>(moved);
    }
  const auto results = oracle.query(probes, mix_seed(cfg.seed, 2 * static_cast<std::uint64_t>(state.t)));
  state.queries_used += d;
  std::vector<double> grad(n, 0.0);
  const double scale = 1.0 / (cfg.sigma * static_cast<double>(d));
  for (const auto& r : results)
    if (!std::isfinite(r.loss)) throw NumericError("oracle returned a non-finite loss");
  // Pairs are accumulated together so that mirrored terms cancel exactly.
  const auto& w = cfg.unclamped_theta ? theta : theta_clamped;
  for (std::size_t i = 0; i < d / 2; ++i) {
    const std::size_t j = d - 1 - i;
    for (std::size_t k = 0; k < n; ++k)
      grad[k] += (results[i].loss * w[i][k] + results[j].loss * w[j][k]) * scale;
  }
  return grad;
}

void project_perturbation(std::span<float> delta, std::span<const float> x, const AvoidanceConfig& cfg) {
  if (delta.size() != x.size()) throw ShapeError("perturbation size does not match input");
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double moved = std::clamp(static_cast<double>(x[k]) + delta[k], 0.0, 1.0);
    delta[k] = static_cast<float>(moved - x[k]);
  }
  const double norm = lp_norm(delta, cfg.p);
  if (norm > cfg.epsilon) {
    const double f = cfg.epsilon / norm;
    for (auto& v : delta) v = static_cast<float>(v * f);
  }
}

void avoidance_step(AvoidanceState& state, std::span<const double> grad, const AvoidanceConfig& cfg,
                    std::span<const float> x) {
  const std::size_t n = x.size();
  if (grad.size() != n || state.delta.size() != n) throw ShapeError("gradient size does not match input");
  if (state.grad_prev.size() != n) state.grad_prev.assign(n, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    if (!std::isfinite(grad[k])) throw NumericError("non-finite gradient estimate");
    const double g = cfg.mu * state.grad_prev[k] + (1 - cfg.mu) * grad[k];
    state.grad_prev[k] = g;
    const double s = g > 0 ? 1.0 : (g < 0 ? -1.0 : 0.0);
    state.delta[k] = static_cast<float>(state.delta[k] - cfg.eta * s);
  }
  project_perturbation(state.delta, x, cfg);
  ++state.t;
}

namespace {

struct Measurement {
  double benign_rate = 0;
  double preserved_rate = 0;
  int majority_label = 0;
};

Measurement measure(const LossOracle& oracle, std::span<const float> x, const AvoidanceState& s,
                    const AvoidanceConfig& cfg, int victim_label, std::uint64_t stream, std::size_t& reeval) {
  std::vector<float> xp(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) xp[k] = x[k] + s.delta[k];
  const int reps = oracle.stochastic() ? cfg.repeats : 1;
  const std::vector<std::vector<float>> batch(static_cast<std::size_t>(reps), xp);
  const auto res = oracle.query(batch, stream);
  reeval += static_cast<std::size_t>(reps);
  Measurement m;
  std::vector<int> votes(kNumTraceLabels, 0);
  for (const auto& r : res) {
    m.benign_rate += r.detector_label == 0;
    m.preserved_rate += r.victim_label == victim_label;
    if (r.detector_label >= 0 && r.detector_label < kNumTraceLabels) ++votes[static_cast<std::size_t>(r.detector_label)];
  }
  m.benign_rate /= reps;
  m.preserved_rate /= reps;
  m.majority_label = static_cast<int>(std::max_element(votes.begin(), votes.end()) - votes.begin());
  return m;
}

}  // namespace

AvoidanceResult run_avoidance(const LossOracle& oracle, std::span<const float> x, const AvoidanceConfig& cfg,
                              const IterateObserver& observe) {
  cfg.validate();
  for (float v : x)
    if (!(v >= 0.f && v <= 1.f)) throw DataError("avoidance input must lie in [0, 1]");
  AvoidanceResult r;
  r.state = initial_state(x.size());
  auto& s = r.state;
  const std::vector<std::vector<float>> single{std::vector<float>(x.begin(), x.end())};
  r.victim_label = oracle.query(single, mix_seed(cfg.seed, 0xF00D))[0].victim_label;
  const auto start = measure(oracle, x, s, cfg, r.victim_label, mix_seed(cfg.seed, 1), s.reeval_queries);
  r.initial_detector_label = start.majority_label;
  if (start.majority_label == 0)
    throw ExperimentError("input is already classified benign; nothing to avoid");
  r.curve.push_back({0, start.benign_rate, s.queries_used, start.preserved_rate});
  std::mt19937_64 rng(cfg.seed);
  std::size_t broken = 0;
  while (s.t < cfg.iters && s.queries_used + static_cast<std::size_t>(cfg.d_prime) <= cfg.budget) {
    const auto grad = nes_gradient(oracle, x, s, cfg, rng);
    avoidance_step(s, grad, cfg, x);
    if (observe) observe(x, s);
    const auto m = measure(oracle, x, s, cfg, r.victim_label, mix_seed(cfg.seed, 2 * static_cast<std::uint64_t>(s.t) + 1),
                           s.reeval_queries);
    broken += m.preserved_rate < 1.0;
    r.curve.push_back({s.t, m.benign_rate, s.queries_used, m.preserved_rate});
  }
  r.label_broken_fraction = s.t > 0 ? static_cast<double>(broken) / s.t : 0.0;
  return r;
}

std::string curve_csv(const AvoidanceResult& r) {
  std::ostringstream os;
  os << "iteration,benign_rate,queries_used,victim_label_preserved_rate\n";
  os.setf(std::ios::fixed);
  os.precision(6);
  for (const auto& p : r.curve)
    os << p.iteration << ',' << p.benign_rate << ',' << p.queries_used << ',' << p.victim_label_preserved_rate << '\n';
  return os.str();
}

namespace {

Tensor batch_of(std::span<const std::vector<float>> inputs, const Shape& sample) {
  if (inputs.empty()) throw DataError("empty oracle query");
  Shape shape{static_cast<int>(inputs.size())};
  shape.insert(shape.end(), sample.begin(), sample.end());
  Tensor t(shape);
  const std::size_t n = numel(sample);
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (inputs[i].size() != n) throw ShapeError("oracle input has the wrong size");
    std::copy(inputs[i].begin(), inputs[i].end(), t.storage().begin() + static_cast<long>(i * n));
  }
  return t;
}

// Benign-class cross-entropy from logits. Working from probabilities clamps at
// 1e-12, which leaves the loss flat on confidently flagged inputs.
std::vector<OracleResult> score(const Tensor& logits, const std::vector<int>& victim_labels) {
  const auto rows = static_cast<std::size_t>(logits.dim(0)), cols = static_cast<std::size_t>(logits.dim(1));
  std::vector<OracleResult> out(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    const std::span<const float> row(logits.data() + i * cols, cols);
    const double top = *std::max_element(row.begin(), row.end());
    double sum = 0.0;
    for (const float z : row) sum += std::exp(static_cast<double>(z) - top);
    out[i].loss = top + std::log(sum) - static_cast<double>(row[0]);
    out[i].detector_label = argmax_row(row);
    out[i].victim_label = victim_labels[i];
  }
  return out;
}

}  // namespace

SurrogateOracle::SurrogateOracle(Network detector, Network victim)
    : detector_(std::move(detector)), victim_(std::move(victim)) {
  if (detector_.input_shape != victim_.input_shape) throw ConfigError("surrogate and victim inputs differ");
}

std::vector<OracleResult> SurrogateOracle::query(std::span<const std::vector<float>> inputs, std::uint64_t) const {
  const Tensor x = batch_of(inputs, detector_.input_shape);
  return score(forward_logits(detector_, x), predict_labels(victim_, x));
}

PipelineOracle::PipelineOracle(PipelineSetup setup) : s_(std::move(setup)) {
  s_.pdn.validate();
  s_.placement.validate();
  s_.tdc.validate();
  s_.detector_cfg.validate();
  if (s_.detector.input_shape != s_.detector_cfg.input_shape()) throw ConfigError("detector does not match its config");
}

Trace PipelineOracle::trace(std::span<const float> input, std::uint64_t noise_seed) const {
  const Tensor x(s_.victim.net.input_shape, std::vector<float>(input.begin(), input.end()));
  const auto activity = switching_activity(emit_schedule(s_.victim, x));
  const auto v = apply_placement(pdn_filter(activity, s_.pdn), s_.placement, s_.pdn.noise_sigma, noise_seed);
  return sample_trace(v, s_.tdc, s_.calibration, s_.frequency_factor);
}

std::vector<OracleResult> PipelineOracle::query(std::span<const std::vector<float>> inputs, std::uint64_t stream) const {
  std::vector<Tensor> mats;
  mats.reserve(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i)
    mats.push_back(preprocess(trace(inputs[i], mix_seed(stream, i)).readouts, s_.detector_cfg));
  const Tensor batch = stack<float>(mats);
  const auto victim_labels = predict_labels(s_.victim.net, batch_of(inputs, s_.victim.net.input_shape));
  return score(forward_logits(s_.detector, batch), victim_labels);
}

}  // namespace scdet
