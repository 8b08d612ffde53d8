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
#include <string>
#include <vector>

#include "scdet/leakage.hpp"

namespace scdet {

enum class ReadoutMode : std::uint8_t { Raw = 0, Sum = 1, ExpSum = 2 };

struct TDCConfig {
  int taps = 128;
  int coarse_max = 32;
  int fine_max = 32;
  double coarse_unit_ps = 80;
  double fine_unit_ps = 10;
  double tap_unit_ps = 20;  // per tap at nominal voltage
  double sensor_clock_hz = 150e6;
  double bus_clock_hz = 10e6;
  double sensitivity = 400;  // taps lost per volt of drop
  ReadoutMode readout_mode = ReadoutMode::Sum;

  void validate() const;
  // The launched edge is captured half a sensor period later.
  double capture_window_ps() const { return 0.5e12 / sensor_clock_hz; }
};

struct CalibrationResult {
  int coarse_len = 0;
  int fine_len = 0;
  int nominal_readout = 0;
};

// Taps the edge reaches at nominal voltage for a given initial delay.
int nominal_taps(const TDCConfig& cfg, int coarse_len, int fine_len);

CalibrationResult calibrate(const TDCConfig& cfg);

int readout(const TDCConfig& cfg, const CalibrationResult& calib, double v_drop);

// Value stored per readout. Raw mode stores taps_reached, from which the
// thermometer code is recovered losslessly.
std::uint32_t encode(const TDCConfig& cfg, int taps_reached);
std::vector<std::uint8_t> thermometer(const TDCConfig& cfg, int taps_reached);

enum class TraceLabel : std::uint8_t { Benign = 0, Adversarial = 1, Backdoor = 2, Extraction = 3 };
inline constexpr int kNumTraceLabels = 4;

enum class AttackMethod : std::uint8_t {
  None = 0,
  FGSM,
  PGD,
  CW,
  PatternTrigger,
  InstanceTrigger,
  Watermark,
  FashionSurrogate,
  Cifar10Surrogate,
  JBDA,
  DeepFool,
  SquareTrigger,
  Cifar100Surrogate,
};
inline constexpr int kNumAttackMethods = 13;

TraceLabel label_of(AttackMethod m);
std::string to_string(AttackMethod m);
std::string to_string(TraceLabel l);
AttackMethod parse_attack_method(const std::string& s);

struct Trace {
  std::vector<std::uint32_t> readouts;
  ReadoutMode mode = ReadoutMode::Sum;
  TraceLabel label = TraceLabel::Benign;
  std::uint32_t victim_id = 0;
  AttackMethod attack = AttackMethod::None;
  Placement placement = Placement::Baseline;
  std::uint8_t factor = 1;

  friend bool operator==(const Trace&, const Trace&) = default;
};

Trace sample_trace(const VoltageSeries& voltage, const TDCConfig& cfg, const CalibrationResult& calib, int factor);

inline constexpr std::uint16_t kTraceVersion = 1;
std::string encode_trace(const Trace& t);
Trace decode_trace(std::string_view bytes);
void save_trace(const std::string& path, const Trace& t);
Trace load_trace(const std::string& path);

}  // namespace scdet
