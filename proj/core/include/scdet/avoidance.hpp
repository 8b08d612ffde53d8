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

#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "scdet/detector.hpp"
#include "scdet/leakage.hpp"
#include "scdet/tdc.hpp"
#include "scdet/victim.hpp"

namespace scdet {

struct AvoidanceConfig {
  int d_prime = 256;
  double sigma = 1e-3;
  double eta = 1e-3;
  double mu = 0.5;
  double epsilon = 1.0 / 255.0;
  double p = std::numeric_limits<double>::infinity();  // norm order
  int iters = 256;
  std::size_t budget = 65536;
  int repeats = 100;  // trace collections per iterate when measuring the curve
  // Weight losses by the unclamped probe theta instead of the clamped theta'.
  bool unclamped_theta = false;
  std::uint64_t seed = 0;

  void validate() const;
};

struct OracleResult {
  double loss = 0;  // detector loss toward the benign class
  int detector_label = 0;
  int victim_label = 0;
};

class LossOracle {
 public:
  virtual ~LossOracle() = default;
  // One result per input; `stream` seeds any measurement noise so that
  // results depend only on (inputs, stream).
  virtual std::vector<OracleResult> query(std::span<const std::vector<float>> inputs, std::uint64_t stream) const = 0;
  // False when repeated queries of one input always agree.
  virtual bool stochastic() const { return true; }
};

struct AvoidanceState {
  std::vector<float> delta;
  std::vector<double> grad_prev;
  int t = 0;
  std::size_t queries_used = 0;    // gradient-estimation queries
  std::size_t reeval_queries = 0;  // curve measurement queries, counted separately
};

AvoidanceState initial_state(std::size_t n);

double lp_norm(std::span<const float> v, double p);

// Probes theta_1..theta_d' with theta_i = -theta_{d'-i+1} for the second half.
std::vector<std::vector<double>> antithetic_probes(std::size_t n, int d_prime, std::mt19937_64& rng);

std::vector<double> nes_gradient(const LossOracle& oracle, std::span<const float> x, AvoidanceState& state,
                                 const AvoidanceConfig& cfg, std::mt19937_64& rng);

// Clips X+delta into [0,1] and rescales delta onto the norm ball; idempotent.
void project_perturbation(std::span<float> delta, std::span<const float> x, const AvoidanceConfig& cfg);

// Momentum blend, signed step, box clip and norm rescale.
void avoidance_step(AvoidanceState& state, std::span<const double> grad, const AvoidanceConfig& cfg,
                    std::span<const float> x);

struct CurvePoint {
  int iteration = 0;
  double benign_rate = 0;
  std::size_t queries_used = 0;
  double victim_label_preserved_rate = 0;
};

struct AvoidanceResult {
  std::vector<CurvePoint> curve;  // iteration 0 is the unperturbed input
  AvoidanceState state;
  int initial_detector_label = 0;
  int victim_label = 0;
  double label_broken_fraction = 0;  // iterates where the victim label changed
};

// Called with the clean input and the state after every step.
using IterateObserver = std::function<void(std::span<const float> x, const AvoidanceState&)>;

AvoidanceResult run_avoidance(const LossOracle& oracle, std::span<const float> x, const AvoidanceConfig& cfg,
                              const IterateObserver& observe = {});

std::string curve_csv(const AvoidanceResult& r);

// Differentiable classifier applied to the input directly; noiseless.
class SurrogateOracle final : public LossOracle {
 public:
  SurrogateOracle(Network detector, Network victim);
  std::vector<OracleResult> query(std::span<const std::vector<float>> inputs, std::uint64_t stream) const override;
  bool stochastic() const override { return false; }

 private:
  Network detector_, victim_;
};

struct PipelineSetup {
  QuantizedNetwork victim;
  PDNParams pdn;
  PlacementProfile placement;
  TDCConfig tdc;
  CalibrationResult calibration;
  int frequency_factor = 1;
  DetectorConfig detector_cfg;
  Network detector;
};

// Full simulated chain: schedule, leakage, noisy TDC trace, detector.
class PipelineOracle final : public LossOracle {
 public:
  explicit PipelineOracle(PipelineSetup setup);
  std::vector<OracleResult> query(std::span<const std::vector<float>> inputs, std::uint64_t stream) const override;
  Trace trace(std::span<const float> input, std::uint64_t noise_seed) const;

 private:
  PipelineSetup s_;
};

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace scdet
