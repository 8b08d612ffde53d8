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
#include <span>
#include <string>
#include <vector>

#include "scdet/quantize.hpp"
#include "scdet/training.hpp"

namespace scdet {

// Layer menu of the randomized victim generator.
struct VictimMenu {
  int min_depth = 2;
  int max_depth = 18;
  std::vector<int> conv_kernels{2, 3, 4, 5};
  std::vector<int> conv_channels{10, 20, 30};
  std::vector<int> pool_kernels{2, 3, 4, 5};
  std::vector<int> fc_units{100, 200, 300, 400, 500};
  int classes = 10;
  // Smallest feature-map side a conv or pool layer may produce; deeper
  // shrinking leaves nets that cannot be trained.
  int min_feature_side = 7;
  // Upper bound on multiply-accumulates per inference; keeps traces and
  // training time at desk scale.
  std::size_t max_macs = 400'000;
  int max_attempts = 20000;
};

struct VictimSpec {
  int depth = 0;  // == layers.size(), counting the final FC + Softmax
  std::vector<LayerSpec> layers;
  std::uint64_t seed = 0;

  friend bool operator==(const VictimSpec&, const VictimSpec&) = default;
};

inline const Shape kVictimInputShape{1, 28, 28};

VictimSpec generate_victim(std::uint64_t seed, const VictimMenu& menu = {});
// Throws ConfigError describing the first violated menu constraint.
void validate_victim(const VictimSpec& spec, const VictimMenu& menu = {});
std::size_t count_macs(const std::vector<LayerSpec>& layers, const Shape& input_shape = kVictimInputShape);
std::string describe(const VictimSpec& spec);

enum class Engine : std::uint8_t { ConvMAC = 0, PoolCmp = 1, FCMAC = 2, Activation = 3 };

struct CycleEvent {
  int layer_index = 0;
  Engine engine = Engine::ConvMAC;
  std::vector<std::uint8_t> operand_words;
};

// Per-cycle operand words of one quantized inference, stored flat.
class OpStream {
 public:
  void push(int layer_index, Engine engine, std::span<const std::uint8_t> words);
  std::size_t cycles() const { return layer_.size(); }
  std::span<const std::uint8_t> words(std::size_t cycle) const {
    return {words_.data() + offsets_[cycle], offsets_[cycle + 1] - offsets_[cycle]};
  }
  int layer_index(std::size_t cycle) const { return layer_[cycle]; }
  Engine engine(std::size_t cycle) const { return engine_[cycle]; }
  CycleEvent event(std::size_t cycle) const;
  friend bool operator==(const OpStream&, const OpStream&) = default;

 private:
  std::vector<std::uint32_t> offsets_{0};
  std::vector<std::uint8_t> words_;
  std::vector<std::int32_t> layer_;
  std::vector<Engine> engine_;
};

struct ScheduleConfig {
  int mac_lanes = 16;  // G: multiply-accumulates per MAC cycle
};

// Integer inference of `qnet` on one input ([1,28,28] or the net's input
// shape) emitting one event per MAC group (conv / FC) or per output element
// (pool / activation). MAC cycles carry G weight lanes, G activation lanes and
// the accumulator's low byte; lanes of a partial final group are driven 0x00.
OpStream emit_schedule(const QuantizedNetwork& qnet, const Tensor& input, const ScheduleConfig& cfg = {});

// Cycle count without materializing operand words; equal to
// emit_schedule(...).cycles() for every input.
std::size_t schedule_length(const Network& net, const ScheduleConfig& cfg = {});

struct VictimRecipe {
  int epochs = 5;
  double lr = 2e-3;
  int batch = 32;
  double min_train_accuracy = 0.9;
  double max_failed_fraction = 0.2;
  bool regenerate_flagged = true;
  int max_regenerations = 5;
  std::size_t calibration_samples = 64;
};

struct TrainedVictim {
  VictimSpec spec;
  QuantizedNetwork model;
  double train_accuracy = 0.0;
  bool flagged = false;  // the originally requested spec missed the threshold
  int regenerations = 0;
};

// Trains and quantizes each spec on a 10-class 28x28 grayscale dataset.
// Throws ExperimentError when more than max_failed_fraction of the specs miss
// min_train_accuracy on their first attempt.
std::vector<TrainedVictim> train_victims(std::span<const VictimSpec> specs, const Dataset& data,
                                         const VictimRecipe& recipe, const VictimMenu& menu = {});

// Trains one network of the given layer stack (shared by the backdoor path).
Network train_victim_network(const std::vector<LayerSpec>& layers, std::uint64_t seed, const Dataset& data,
                             const VictimRecipe& recipe);

void require_victim_dataset(const Dataset& data);

}  // namespace scdet
