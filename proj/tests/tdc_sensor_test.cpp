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

#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <tuple>

#include "scdet/byteio.hpp"
#include "scdet/tdc.hpp"

namespace scdet {
namespace {

// Walks the edge tap by tap through the remaining capture window.
int walked_taps(const TDCConfig& cfg, int coarse, int fine) {
  long double pos = coarse * static_cast<long double>(cfg.coarse_unit_ps) + fine * cfg.fine_unit_ps;
  const long double window = 1e12L / cfg.sensor_clock_hz / 2;
  int taps = 0;
  while (taps < cfg.taps && pos + cfg.tap_unit_ps <= window) {
    pos += cfg.tap_unit_ps;
    ++taps;
  }
  return taps;
}

TEST(Calibrate, DefaultsLandMidLine) {
  const auto c = calibrate(TDCConfig{});
  EXPECT_GE(c.nominal_readout, 32);
  EXPECT_LE(c.nominal_readout, 96);
}

TEST(Calibrate, MatchesExhaustiveSearchOracle) {
  for (double tap_ps : {20.0, 17.0, 25.0, 12.5}) {
    TDCConfig cfg;
    cfg.tap_unit_ps = tap_ps;
    std::vector<std::tuple<int, int, int, int>> all;  // (distance, coarse, fine, readout)
    for (int c = 0; c <= 32; ++c)
      for (int f = 0; f <= 32; ++f) {
        const int r = walked_taps(cfg, c, f);
        if (r > 0 && r < cfg.taps) all.emplace_back(std::abs(r - cfg.taps / 2), c, f, r);
      }
    ASSERT_EQ(all.size() > 0, true);
    const auto best = *std::min_element(all.begin(), all.end());
    const auto got = calibrate(cfg);
    EXPECT_EQ(got.coarse_len, std::get<1>(best)) << tap_ps;
    EXPECT_EQ(got.fine_len, std::get<2>(best)) << tap_ps;
    EXPECT_EQ(got.nominal_readout, std::get<3>(best)) << tap_ps;
  }
}

TEST(Calibrate, FailsWhenEdgeCannotEnterLine) {
  TDCConfig cfg;
  cfg.tap_unit_ps = 1e6;
  EXPECT_THROW(calibrate(cfg), CalibrationFailed);
}

TEST(Calibrate, RejectsInvalidConfig) {
  TDCConfig cfg;
  cfg.taps = 130;
  EXPECT_THROW(calibrate(cfg), ConfigError);
  cfg = TDCConfig{};
  cfg.bus_clock_hz = 200e6;
  EXPECT_THROW(calibrate(cfg), ConfigError);
}

TEST(Readout, NominalAndFullStall) {
  const TDCConfig cfg;
  const auto c = calibrate(cfg);
  EXPECT_EQ(readout(cfg, c, 0.0), c.nominal_readout);
  EXPECT_EQ(readout(cfg, c, c.nominal_readout / cfg.sensitivity), 0);
  EXPECT_EQ(readout(cfg, c, 10.0), 0);
  EXPECT_EQ(readout(cfg, c, -10.0), cfg.taps);
}

TEST(Readout, MonotoneOverRandomIncreasingSequences) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> step(0.0, 2e-3);
  for (double tap_ps : {20.0, 15.0}) {
    TDCConfig cfg;
    cfg.tap_unit_ps = tap_ps;
    const auto c = calibrate(cfg);
    for (int seq = 0; seq < 500; ++seq) {
      double v = -0.05;
      int prev = readout(cfg, c, v);
      for (int k = 0; k < 100; ++k) {
        v += step(rng) + 1e-9;
        const int r = readout(cfg, c, v);
        ASSERT_LE(r, prev);
        ASSERT_LE(encode(cfg, r), encode(cfg, prev));
        prev = r;
      }
    }
  }
}

TEST(Encode, ModesAtBoundaries) {
  TDCConfig cfg;
  for (auto mode : {ReadoutMode::Raw, ReadoutMode::Sum, ReadoutMode::ExpSum}) {
    cfg.readout_mode = mode;
    EXPECT_EQ(encode(cfg, 0), 0u);
  }
  const auto zeros = thermometer(cfg, 0);
  EXPECT_TRUE(std::all_of(zeros.begin(), zeros.end(), [](auto b) { return b == 0; }));
  cfg.readout_mode = ReadoutMode::Sum;
  EXPECT_EQ(encode(cfg, cfg.taps), 128u);
  cfg.readout_mode = ReadoutMode::ExpSum;
  EXPECT_EQ(encode(cfg, 16), 16u);
  // Bands of 16 taps weigh 1, 2, 4, ..., 128.
  EXPECT_EQ(encode(cfg, 17), 18u);
  EXPECT_EQ(encode(cfg, 128), 16u * 255u);
  const auto therm = thermometer(cfg, 5);
  EXPECT_EQ(std::count(therm.begin(), therm.end(), 1), 5);
  EXPECT_EQ(therm[4], 1);
  EXPECT_EQ(therm[5], 0);
  EXPECT_THROW(encode(cfg, 129), ConfigError);
}

VoltageSeries noisy_series(std::size_t n, std::uint64_t seed) {
  VoltageSeries s;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0, 0.05);
  for (std::size_t i = 0; i < n; ++i) s.samples.push_back(u(rng));
  s.label = 2;
  s.model_id = 17;
  return s;
}

TEST(SampleTrace, LengthsAndConstantNominal) {
  const TDCConfig cfg;
  const auto c = calibrate(cfg);
  const auto s = noisy_series(1000, 1);
  EXPECT_EQ(sample_trace(s, cfg, c, 1).readouts.size(), 1000u);
  EXPECT_EQ(sample_trace(s, cfg, c, 5).readouts.size(), 200u);
  EXPECT_EQ(sample_trace(noisy_series(1001, 1), cfg, c, 5).readouts.size(), 201u);
  VoltageSeries zero;
  zero.samples.assign(64, 0.0);
  for (auto r : sample_trace(zero, cfg, c, 3).readouts) EXPECT_EQ(r, static_cast<std::uint32_t>(c.nominal_readout));
  EXPECT_THROW(sample_trace(VoltageSeries{}, cfg, c, 1), DataError);
  EXPECT_THROW(sample_trace(s, cfg, c, 0), ConfigError);
}

TEST(SampleTrace, SubsamplingCommutes) {
  const TDCConfig cfg;
  const auto c = calibrate(cfg);
  const auto s = noisy_series(997, 2);
  const auto full = sample_trace(s, cfg, c, 1).readouts;
  for (int k : {2, 3, 7, 10, 50}) {
    const auto sub = sample_trace(s, cfg, c, k).readouts;
    std::vector<std::uint32_t> expect;
    for (std::size_t i = 0; i < full.size(); i += static_cast<std::size_t>(k)) expect.push_back(full[i]);
    EXPECT_EQ(sub, expect) << k;
  }
}

TEST(SampleTrace, CarriesProvenance) {
  const TDCConfig cfg;
  const auto t = sample_trace(noisy_series(10, 3), cfg, calibrate(cfg), 2);
  EXPECT_EQ(t.label, TraceLabel::Backdoor);
  EXPECT_EQ(t.victim_id, 17u);
  EXPECT_EQ(t.factor, 2);
}

TEST(TraceFile, RoundTripAndCorruption) {
  Trace t;
  t.readouts = {64, 63, 70, 0, 128};
  t.mode = ReadoutMode::ExpSum;
  t.label = TraceLabel::Extraction;
  t.victim_id = 399;
  t.attack = AttackMethod::JBDA;
  t.placement = Placement::Center;
  t.factor = 10;
  const std::string path = ::testing::TempDir() + "/t.sctr";
  save_trace(path, t);
  EXPECT_EQ(load_trace(path), t);
  const auto bytes = encode_trace(t);
  EXPECT_EQ(bytes.size(), 4u + 2 + 1 + 1 + 4 + 3 + 4 + 4 * 5);
  EXPECT_THROW(decode_trace(bytes.substr(0, bytes.size() - 1)), DataError);
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(decode_trace(bad), DataError);
  bad = bytes;
  bad[7] = 9;  // label
  EXPECT_THROW(decode_trace(bad), DataError);
}

TEST(Labels, MethodsMapToFamilies) {
  EXPECT_EQ(label_of(AttackMethod::None), TraceLabel::Benign);
  EXPECT_EQ(label_of(AttackMethod::DeepFool), TraceLabel::Adversarial);
  EXPECT_EQ(label_of(AttackMethod::SquareTrigger), TraceLabel::Backdoor);
  EXPECT_EQ(label_of(AttackMethod::Cifar100Surrogate), TraceLabel::Extraction);
  for (int i = 0; i < kNumAttackMethods; ++i) {
    const auto m = static_cast<AttackMethod>(i);
    EXPECT_EQ(parse_attack_method(to_string(m)), m);
  }
}

}  // namespace
}  // namespace scdet
