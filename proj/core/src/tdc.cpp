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

#include "scdet/tdc.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

#include "scdet/byteio.hpp"

namespace scdet {

void TDCConfig::validate() const {
  if (taps <= 0 || taps % 4 != 0) throw ConfigError("TDC taps must be a positive multiple of 4");
  if (coarse_max < 0 || fine_max < 0) throw ConfigError("TDC delay-line lengths must be nonnegative");
  if (!(coarse_unit_ps >= 0 && fine_unit_ps >= 0 && tap_unit_ps > 0))
    throw ConfigError("TDC delay units must be positive");
  if (!(sensor_clock_hz > 0 && bus_clock_hz > 0)) throw ConfigError("TDC clocks must be positive");
  if (sensor_clock_hz < bus_clock_hz) throw ConfigError("TDC sensor clock must be at least the bus clock");
  if (!(sensitivity >= 0)) throw ConfigError("TDC sensitivity must be nonnegative");
  if (static_cast<int>(readout_mode) > 2) throw ConfigError("unknown TDC readout mode");
}

int nominal_taps(const TDCConfig& cfg, int coarse_len, int fine_len) {
  const double left = cfg.capture_window_ps() - (coarse_len * cfg.coarse_unit_ps + fine_len * cfg.fine_unit_ps);
  if (left <= 0) return 0;
  return static_cast<int>(std::min<double>(std::floor(left / cfg.tap_unit_ps), cfg.taps));
}

CalibrationResult calibrate(const TDCConfig& cfg) {
  cfg.validate();
  const int target = cfg.taps / 2;
  CalibrationResult best{};
  bool found = false;
  // Outer loop sets the coarse line, inner loop trims with the fine line.
  for (int c = 0; c <= cfg.coarse_max; ++c)
    for (int f = 0; f <= cfg.fine_max; ++f) {
      const int r = nominal_taps(cfg, c, f);
      if (r <= 0 || r >= cfg.taps) continue;
      if (!found || std::abs(r - target) < std::abs(best.nominal_readout - target)) {
        best = {c, f, r};
        found = true;
      }
    }
  if (!found) throw CalibrationFailed("no coarse/fine setting places the edge inside the tapped line");
  if (best.nominal_readout < cfg.taps / 4 || best.nominal_readout > 3 * cfg.taps / 4)
    throw CalibrationFailed("best nominal readout " + std::to_string(best.nominal_readout) +
                            " is outside the middle half of the line");
  return best;
}

int readout(const TDCConfig& cfg, const CalibrationResult& calib, double v_drop) {
  const double r = std::round(calib.nominal_readout - cfg.sensitivity * v_drop);
  return static_cast<int>(std::clamp(r, 0.0, static_cast<double>(cfg.taps)));
}

std::uint32_t encode(const TDCConfig& cfg, int taps_reached) {
  if (taps_reached < 0 || taps_reached > cfg.taps) throw ConfigError("taps_reached outside the line");
  if (cfg.readout_mode != ReadoutMode::ExpSum) return static_cast<std::uint32_t>(taps_reached);
  std::uint32_t sum = 0;
  for (int j = 0; j < taps_reached; ++j) sum += 1u << (8 * j / cfg.taps);
  return sum;
}

std::vector<std::uint8_t> thermometer(const TDCConfig& cfg, int taps_reached) {
  if (taps_reached < 0 || taps_reached > cfg.taps) throw ConfigError("taps_reached outside the line");
  std::vector<std::uint8_t> bits(static_cast<std::size_t>(cfg.taps), 0);
  std::fill_n(bits.begin(), taps_reached, 1);
  return bits;
}

TraceLabel label_of(AttackMethod m) {
  switch (m) {
    case AttackMethod::None: return TraceLabel::Benign;
    case AttackMethod::FGSM:
    case AttackMethod::PGD:
    case AttackMethod::CW:
    case AttackMethod::DeepFool: return TraceLabel::Adversarial;
    case AttackMethod::PatternTrigger:
    case AttackMethod::InstanceTrigger:
    case AttackMethod::Watermark:
    case AttackMethod::SquareTrigger: return TraceLabel::Backdoor;
    case AttackMethod::FashionSurrogate:
    case AttackMethod::Cifar10Surrogate:
    case AttackMethod::JBDA:
    case AttackMethod::Cifar100Surrogate: return TraceLabel::Extraction;
  }
  throw ConfigError("unknown attack method");
}

namespace {
constexpr const char* kMethodNames[kNumAttackMethods] = {
    "benign",   "fgsm",          "pgd",   "cw",      "pattern", "instance", "watermark",
    "fashion",  "cifar10",       "jbda",  "deepfool", "square3x3", "cifar100"};
}

std::string to_string(AttackMethod m) {
  const auto i = static_cast<int>(m);
  if (i < 0 || i >= kNumAttackMethods) throw ConfigError("unknown attack method");
  return kMethodNames[i];
}

AttackMethod parse_attack_method(const std::string& s) {
  for (int i = 0; i < kNumAttackMethods; ++i)
    if (s == kMethodNames[i]) return static_cast<AttackMethod>(i);
  throw ConfigError("unknown attack method '" + s + "'");
}

std::string to_string(TraceLabel l) {
  switch (l) {
    case TraceLabel::Benign: return "benign";
    case TraceLabel::Adversarial: return "adversarial";
    case TraceLabel::Backdoor: return "backdoor";
    case TraceLabel::Extraction: return "extraction";
  }
  return "?";
}

Trace sample_trace(const VoltageSeries& voltage, const TDCConfig& cfg, const CalibrationResult& calib, int factor) {
  if (voltage.samples.empty()) throw DataError("cannot sample an empty voltage series");
  if (factor < 1 || factor > 255) throw ConfigError("frequency factor must lie in [1, 255]");
  Trace t;
  t.mode = cfg.readout_mode;
  t.label = static_cast<TraceLabel>(voltage.label);
  t.victim_id = voltage.model_id;
  t.factor = static_cast<std::uint8_t>(factor);
  const auto step = static_cast<std::size_t>(factor);
  t.readouts.reserve((voltage.samples.size() + step - 1) / step);
  for (std::size_t i = 0; i < voltage.samples.size(); i += step)
    t.readouts.push_back(encode(cfg, readout(cfg, calib, voltage.samples[i])));
  return t;
}

std::string encode_trace(const Trace& t) {
  byteio::Writer w;
  w.bytes("SCTR");
  w.u16(kTraceVersion);
  w.u8(static_cast<std::uint8_t>(t.mode));
  w.u8(static_cast<std::uint8_t>(t.label));
  w.u32(t.victim_id);
  w.u8(static_cast<std::uint8_t>(t.attack));
  w.u8(static_cast<std::uint8_t>(t.placement));
  w.u8(t.factor);
  w.u32(static_cast<std::uint32_t>(t.readouts.size()));
  for (auto v : t.readouts) w.u32(v);
  return w.data();
}

Trace decode_trace(std::string_view bytes) {
  byteio::Reader r(bytes, "SCTR");
  if (r.bytes(4) != "SCTR") throw DataError("not an SCTR trace");
  const auto version = r.u16();
  if (version != kTraceVersion) throw DataError("unsupported SCTR version " + std::to_string(version));
  Trace t;
  const auto mode = r.u8();
  if (mode > 2) throw DataError("SCTR: unknown readout mode");
  t.mode = static_cast<ReadoutMode>(mode);
  const auto label = r.u8();
  if (label >= kNumTraceLabels) throw DataError("SCTR: label out of range");
  t.label = static_cast<TraceLabel>(label);
  t.victim_id = r.u32();
  const auto attack = r.u8();
  if (attack >= kNumAttackMethods) throw DataError("SCTR: unknown attack method");
  t.attack = static_cast<AttackMethod>(attack);
  const auto placement = r.u8();
  if (placement > 3) throw DataError("SCTR: unknown placement");
  t.placement = static_cast<Placement>(placement);
  t.factor = r.u8();
  const auto n = r.u32();
  if (r.remaining() != 4ull * n) throw DataError("SCTR: length field does not match payload");
  t.readouts.resize(n);
  for (auto& v : t.readouts) v = r.u32();
  return t;
}

void save_trace(const std::string& path, const Trace& t) { byteio::write_file(path, encode_trace(t)); }

Trace load_trace(const std::string& path) { return decode_trace(byteio::read_file(path)); }

}  // namespace scdet
