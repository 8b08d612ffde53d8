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

#include "scdet/victim.hpp"

namespace scdet {

// Lumped power-delivery network seen by the accelerator.
struct PDNParams {
  double R = 0.1;               // ohms
  double L = 1e-9;              // henries
  double C = 1e-6;              // farads
  double dt = 1e-7;             // seconds per accelerator cycle (10 MHz)
  double i_per_toggle = 5e-4;   // amperes per bit toggle
  double noise_sigma = 1.25e-3; // volts; 0.5 taps at 400 taps/V

  void validate() const;
};

enum class Placement : std::uint8_t { Baseline = 0, TopLeft = 1, Center = 2, BottomRight = 3 };

struct PlacementProfile {
  Placement name = Placement::Baseline;
  double gain = 1.0;
  int smear = 0;  // extra cycles of box filtering

  void validate() const;
};

PlacementProfile default_profile(Placement p);
std::string to_string(Placement p);
Placement parse_placement(const std::string& s);

struct VoltageSeries {
  std::vector<double> samples;  // volts of drop per accelerator cycle
  std::uint32_t model_id = 0;
  std::uint32_t input_id = 0;
  int label = 0;
};

// Bit toggles per cycle: Hamming distance of each lane against the previous
// cycle's word in the same lane (absent lanes read as 0x00).
std::vector<std::uint32_t> switching_activity(const OpStream& stream);

// i = i_per_toggle * activity; V = iR + L di/dt, followed by an RC low-pass.
// With `clamp` the output is floored at 0.
VoltageSeries pdn_filter(std::span<const std::uint32_t> activity, const PDNParams& params, bool clamp = true);

// The IR + L di/dt stage alone, before the low-pass.
std::vector<double> pdn_raw_drop(std::span<const std::uint32_t> activity, const PDNParams& params);

// Gain, causal box filter over (1 + smear) cycles, then Gaussian noise.
VoltageSeries apply_placement(const VoltageSeries& series, const PlacementProfile& profile, double noise_sigma,
                              std::uint64_t seed);

}  // namespace scdet
