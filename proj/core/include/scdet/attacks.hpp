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
#include <string>
#include <vector>

#include "scdet/tdc.hpp"
#include "scdet/training.hpp"

namespace scdet {

// Gradient of mean softmax cross-entropy w.r.t. the input batch. Networks
// ending in Softmax are differentiated through their logits.
Tensor loss_input_gradient(const Network& net, const Tensor& x, std::span<const int> labels, double* loss = nullptr);

// Gradient of sum(logit_weights * logits) w.r.t. the input batch.
Tensor logit_input_gradient(const Network& net, const Tensor& x, const Tensor& logit_weights,
                            Tensor* logits = nullptr);

struct AdversarialParams {
  double fgsm_eps = 0.5;
  double pgd_eps = 0.5;           // L2 radius
  double pgd_step = 8.0 / 255.0;  // alpha_s
  int pgd_steps = 40;
  double cw_c_min = 0.01;
  double cw_c_max = 1e10;
  int cw_search_steps = 9;
  int cw_max_iter = 200;
  double cw_lr = 0.05;
  double cw_kappa = 0.0;
  int deepfool_max_iter = 50;
  double deepfool_overshoot = 1.02;
};

Tensor fgsm(const Network& net, const Tensor& x, std::span<const int> labels, double eps);

// Ascent direction supplier for a batch; PGD normalizes it per sample.
using GradientFn = std::function<Tensor(const Tensor&)>;

Tensor pgd_l2(const Tensor& x, const GradientFn& grad, double eps, double step, int steps);
Tensor pgd(const Network& net, const Tensor& x, std::span<const int> labels, double eps, double step, int steps);

struct AttackOutcome {
  Tensor x_adv;                // same shape as the input batch
  std::vector<bool> success;   // label changed, per sample
  std::vector<double> l2;      // distortion per sample
  std::size_t successes() const;
};

AttackOutcome cw_l2(const Network& net, const Tensor& x, std::span<const int> labels, const AdversarialParams& p = {});
AttackOutcome deepfool(const Network& net, const Tensor& x, const AdversarialParams& p = {});

enum class TriggerKind : std::uint8_t { Pattern, Instance, Watermark, Square3x3 };

struct TriggerSpec {
  TriggerKind kind = TriggerKind::Pattern;
  std::vector<std::uint8_t> mask;  // 28x28, 1 where the trigger applies
  std::vector<float> content;      // 28x28
  double alpha = 1.0;
};

// `instance` is the out-of-class image used by the instance trigger.
TriggerSpec make_trigger(TriggerKind kind, std::uint64_t seed, const Tensor* instance = nullptr);
std::string to_string(TriggerKind k);

// x' = (1 - alpha) x + alpha content on the mask, for every sample in the batch.
Tensor apply_trigger(const Tensor& x, const TriggerSpec& trigger);

struct PoisonedDataset {
  Dataset data;
  std::vector<std::size_t> poisoned;
  std::vector<std::string> warnings;
};

PoisonedDataset poison_dataset(const Dataset& data, const TriggerSpec& trigger, double rate, int target_label,
                               std::uint64_t seed);

struct BackdoorResult {
  Network model;
  double clean_accuracy = 0;
  double attack_success_rate = 0;
  std::vector<std::size_t> poisoned;
  std::vector<std::string> warnings;
};

// Attack success rate: fraction of non-target test samples classified as the
// target once the trigger is applied.
double attack_success_rate(const Network& net, const Dataset& test, const TriggerSpec& trigger, int target_label);

BackdoorResult poison_and_train(const Dataset& train_set, const Dataset& test_set, const TriggerSpec& trigger,
                                double rate, int target_label, const std::vector<LayerSpec>& layers,
                                std::uint64_t seed, const TrainOptions& recipe);

enum class ExtractionSource : std::uint8_t { Fashion, Cifar10, Cifar100, JBDA };
std::string to_string(ExtractionSource s);

struct ExtractionParams {
  double lambda = 0.1;
  double lr = 5e-3;
  int epochs = 10;
  int rounds = 2;
  int batch = 32;
  std::vector<LayerSpec> substitute{LayerSpec::fully_connected(200), LayerSpec::relu(),
                                    LayerSpec::fully_connected(10), LayerSpec::softmax()};
};

// Jacobian-based augmentation: each round labels the set with the victim,
// trains the substitute, then adds clip(x + lambda sign(dZ_y/dx)) for the
// substitute's predicted class y.
Tensor jbda_queries(const Network& victim, const Tensor& seeds, const ExtractionParams& p, std::uint64_t seed);

// Query stream for an extraction attack. Surrogate sources draw `count`
// images from `pool`; JBDA expands `pool` as seeds.
Tensor extraction_queries(ExtractionSource source, const Network& victim, const Dataset& pool, std::size_t count,
                          const ExtractionParams& p, std::uint64_t seed);

// Input-file companion to SCTR traces.
std::string encode_inputs(const Tensor& images);
Tensor decode_inputs(std::string_view bytes);

}  // namespace scdet
