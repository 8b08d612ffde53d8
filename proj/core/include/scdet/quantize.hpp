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
#include <vector>

#include "scdet/network.hpp"

namespace scdet {

// Symmetric per-tensor int8 quantization: code = round(x / scale), zero point 0.
struct QuantParams {
  float scale = 1.f;
  int zero_point = 0;
};

inline constexpr float kMinQuantScale = 1e-8f;

QuantParams calibrate_min_max(std::span<const float> values);
std::int8_t quantize_value(float x, const QuantParams& q);
float dequantize_value(std::int8_t code, const QuantParams& q);
std::vector<std::int8_t> quantize_values(std::span<const float> values, const QuantParams& q);

struct QuantizedLayer {
  std::vector<std::int8_t> weights;  // empty for parameter-free layers
  QuantParams weight_q;
  std::vector<std::int32_t> bias;  // in accumulator units (weight_scale * input_scale)
  QuantParams output_q;
};

// Float network plus the int8 view used for schedule emission.
struct QuantizedNetwork {
  Network net;
  QuantParams input_q;
  std::vector<QuantizedLayer> layers;
};

// Min-max calibration over `calib_inputs` ([batch, ...input_shape]). ReLU and
// max-pool outputs inherit their input scale; Softmax outputs use 1/127.
QuantizedNetwork quantize_network(const Network& net, const Tensor& calib_inputs);

}  // namespace scdet
