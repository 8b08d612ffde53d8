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

#include "scdet/quantize.hpp"

#include <algorithm>
#include <cmath>

namespace scdet {

QuantParams calibrate_min_max(std::span<const float> values) {
  float max_abs = 0.f;
  for (float v : values) max_abs = std::max(max_abs, std::abs(v));
  return QuantParams{std::max(max_abs / 127.f, kMinQuantScale), 0};
}

std::int8_t quantize_value(float x, const QuantParams& q) {
  const float code = std::nearbyint(x / q.scale) + static_cast<float>(q.zero_point);
  return static_cast<std::int8_t>(std::clamp(code, -128.f, 127.f));
}

float dequantize_value(std::int8_t code, const QuantParams& q) {
  return static_cast<float>(static_cast<int>(code) - q.zero_point) * q.scale;
}

std::vector<std::int8_t> quantize_values(std::span<const float> values, const QuantParams& q) {
  std::vector<std::int8_t> out(values.size());
  std::transform(values.begin(), values.end(), out.begin(), [&](float v) { return quantize_value(v, q); });
  return out;
}

QuantizedNetwork quantize_network(const Network& net, const Tensor& calib_inputs) {
  if (calib_inputs.empty() || calib_inputs.dim(0) < 1) throw DataError("quantization needs a calibration batch");
  QuantizedNetwork q;
  q.net = net;
  q.input_q = calibrate_min_max(calib_inputs.values());
  Tape tape;
  forward(net, calib_inputs, {}, &tape);
  QuantParams in_q = q.input_q;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const auto& l = net.layers[i];
    QuantizedLayer ql;
    if (l.has_parameters()) {
      ql.weight_q = calibrate_min_max(net.params[i][0].values());
      ql.weights = quantize_values(net.params[i][0].values(), ql.weight_q);
      const double acc_scale = static_cast<double>(ql.weight_q.scale) * in_q.scale;
      for (float b : net.params[i][1].values())
        ql.bias.push_back(static_cast<std::int32_t>(std::llround(static_cast<double>(b) / acc_scale)));
    }
    switch (l.kind) {
      case LayerKind::ReLU:
      case LayerKind::MaxPool2D:
      case LayerKind::Dropout:
        ql.output_q = in_q;
        break;
      case LayerKind::Softmax:
        ql.output_q = QuantParams{1.f / 127.f, 0};
        break;
      default:
        ql.output_q = calibrate_min_max(tape.caches[i].output.values());
    }
    in_q = ql.output_q;
    q.layers.push_back(std::move(ql));
  }
  return q;
}

}  // namespace scdet
