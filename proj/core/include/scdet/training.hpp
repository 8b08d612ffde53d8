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
#include <vector>

#include "scdet/network.hpp"

namespace scdet {

// Labeled samples stacked along the leading axis.
struct Dataset {
  Tensor inputs;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  Shape sample_shape() const { return Shape(inputs.shape().begin() + 1, inputs.shape().end()); }
  Tensor sample(std::size_t i) const;
  Tensor gather(std::span<const std::size_t> indices) const;
  std::vector<int> gather_labels(std::span<const std::size_t> indices) const;
  Dataset subset(std::span<const std::size_t> indices) const;
};

Dataset concat(const Dataset& a, const Dataset& b);

enum class OptimizerKind { SGD, Adam };

struct AdamParams {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// First-order optimizer over a network's parameters.
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, double lr, AdamParams adam = {});
  void step(Network& net, const Gradients& grads);
  double learning_rate() const { return lr_; }

 private:
  OptimizerKind kind_;
  double lr_;
  AdamParams adam_;
  long step_ = 0;
  std::vector<std::vector<std::vector<float>>> m_, v_;
};

struct EpochStats {
  double loss = 0.0;
  double accuracy = 0.0;
};

struct TrainOptions {
  OptimizerKind optimizer = OptimizerKind::Adam;
  int epochs = 10;
  double lr = 1e-3;
  int batch = 32;
  std::uint64_t seed = 0;
  // Draw each batch with equal counts per class instead of a plain shuffle.
  bool class_balanced = false;
  int num_classes = 0;
  std::function<void(int epoch, const EpochStats&)> on_epoch;
};

// Mini-batch cross-entropy training. Deterministic for a fixed seed.
std::vector<EpochStats> train(Network& net, const Dataset& data, const TrainOptions& opts);

// Batched inference; returns the network output for every sample.
Tensor predict(const Network& net, const Tensor& inputs, int batch = 64);
std::vector<int> predict_labels(const Network& net, const Tensor& inputs, int batch = 64);
double accuracy(const Network& net, const Dataset& data);

}  // namespace scdet
