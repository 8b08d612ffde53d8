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
#include <vector>

#include "scdet/network.hpp"

namespace scdet {

struct GradCheckOptions {
  enum class Loss {
    // L = sum(output * R) for a fixed random R; works for any output shape.
    Projection,
    // Cross-entropy on the network's probabilities (needs a trailing Softmax).
    CrossEntropy,
  };
  Loss loss = Loss::Projection;
  std::vector<int> labels;
  bool training = false;  // run dropout with a fixed mask
  std::uint64_t seed = 7;
  // Added to the first analytic gradient entry; used to self-test the checker.
  double inject_fault = 0.0;
  std::size_t max_parameters = 10000;
};

// Largest relative error between analytic and central-difference gradients
// over every trainable parameter:
//   |analytic - numeric| / max(|analytic|, |numeric|, 1e-8)
// Evaluated in double precision.
double check_gradients(const Network& net, const Tensor& input, double h, const GradCheckOptions& opts = {});

}  // namespace scdet
