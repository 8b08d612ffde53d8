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

#include <bit>
#include <random>

#include "scdet/leakage.hpp"

namespace scdet {
namespace {

OpStream stream_of(const std::vector<std::vector<std::uint8_t>>& cycles) {
  OpStream s;
  for (const auto& c : cycles) s.push(0, Engine::FCMAC, c);
  return s;
}

std::vector<std::vector<std::uint8_t>> random_cycles(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<std::vector<std::uint8_t>> out(n);
  for (auto& c : out) {
    c.resize(1 + rng() % 6);
    for (auto& w : c) w = static_cast<std::uint8_t>(rng());
  }
  return out;
}

PDNParams quiet() {
  PDNParams p;
  p.noise_sigma = 0;
  return p;
}

TEST(SwitchingActivity, ConstantLaneTogglesOnlyOnce) {
  const auto a = switching_activity(stream_of({{0xAB}, {0xAB}, {0xAB}, {0xAB}}));
  EXPECT_EQ(a, (std::vector<std::uint32_t>{5, 0, 0, 0}));
}

TEST(SwitchingActivity, FullByteFlipCountsEight) {
  EXPECT_EQ(switching_activity(stream_of({{0x00}, {0xFF}}))[1], 8u);
}

TEST(SwitchingActivity, MatchesPopcountOracle) {
  const auto cycles = random_cycles(100, 3);
  const auto a = switching_activity(stream_of(cycles));
  // Oracle: count differing bits one at a time, lane by lane.
  std::vector<std::uint8_t> prev(8, 0);
  for (std::size_t t = 0; t < cycles.size(); ++t) {
    std::uint32_t expect = 0;
    for (std::size_t lane = 0; lane < 8; ++lane) {
      const std::uint8_t cur = lane < cycles[t].size() ? cycles[t][lane] : 0;
      for (int b = 0; b < 8; ++b) expect += ((cur >> b) & 1) != ((prev[lane] >> b) & 1);
      prev[lane] = cur;
    }
    ASSERT_EQ(a[t], expect) << "cycle " << t;
  }
}

TEST(SwitchingActivity, ShiftEquivariantUnderLeadingZeroCycles) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto cycles = random_cycles(50, seed);
    const auto base = switching_activity(stream_of(cycles));
    const std::size_t k = seed % 5 + 1;
    cycles.insert(cycles.begin(), k, std::vector<std::uint8_t>{0});
    const auto shifted = switching_activity(stream_of(cycles));
    ASSERT_EQ(shifted.size(), base.size() + k);
    for (std::size_t i = 0; i < k; ++i) EXPECT_EQ(shifted[i], 0u);
    EXPECT_TRUE(std::equal(base.begin(), base.end(), shifted.begin() + static_cast<long>(k)));
  }
}

TEST(Pdn, ZeroActivityGivesZeroSeries) {
  const std::vector<std::uint32_t> zeros(50, 0);
  for (double v : pdn_filter(zeros, quiet()).samples) EXPECT_EQ(v, 0.0);
}

TEST(Pdn, ConstantActivitySettlesToIr) {
  const std::vector<std::uint32_t> a(200, 100);
  const auto p = quiet();
  const auto v = pdn_filter(a, p).samples;
  const double expect = p.i_per_toggle * 100 * p.R;
  EXPECT_NEAR(v.back(), expect, 0.01 * expect);
}

TEST(Pdn, ImpulsePeakAndRcDecay) {
  std::vector<std::uint32_t> a(40, 0);
  a[10] = 1;
  const auto p = quiet();
  const double peak = p.i_per_toggle * (p.R + p.L / p.dt);
  const auto raw = pdn_raw_drop(a, p);
  EXPECT_NEAR(raw[10], peak, 1e-15);
  EXPECT_EQ(*std::max_element(raw.begin(), raw.end()), raw[10]);
  const double alpha = p.dt / (p.R * p.C + p.dt);
  const auto v = pdn_filter(a, p, false).samples;
  EXPECT_NEAR(v[10], alpha * peak, 1e-15);
  EXPECT_EQ(std::max_element(v.begin(), v.end()) - v.begin(), 10);
  // After the impulse the input is zero, so the output decays geometrically.
  for (std::size_t t = 13; t < 40; ++t) EXPECT_NEAR(v[t], v[t - 1] * (1 - alpha), 1e-18);
}

TEST(Pdn, LinearBeforeClamping) {
  std::mt19937_64 rng(8);
  const auto p = quiet();
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::uint32_t> a1(64), a2(64), sum(64);
    for (std::size_t i = 0; i < 64; ++i) {
      a1[i] = rng() % 200;
      a2[i] = rng() % 200;
      sum[i] = a1[i] + a2[i];
    }
    const auto v1 = pdn_filter(a1, p, false).samples, v2 = pdn_filter(a2, p, false).samples,
               vs = pdn_filter(sum, p, false).samples;
    for (std::size_t i = 0; i < 64; ++i) ASSERT_NEAR(vs[i], v1[i] + v2[i], 1e-12);
  }
}

TEST(Pdn, ClampedOutputIsNonNegative) {
  std::vector<std::uint32_t> a(100, 0);
  for (std::size_t i = 0; i < 100; i += 7) a[i] = 300;
  for (double v : pdn_filter(a, quiet()).samples) EXPECT_GE(v, 0.0);
}

TEST(Pdn, RejectsNonPositiveParameters) {
  PDNParams p;
  p.C = 0;
  EXPECT_THROW(pdn_filter(std::vector<std::uint32_t>{1}, p), ConfigError);
  p = PDNParams{};
  p.noise_sigma = -1;
  EXPECT_THROW(p.validate(), ConfigError);
}

VoltageSeries ramp(std::size_t n) {
  VoltageSeries s;
  for (std::size_t i = 0; i < n; ++i) s.samples.push_back(1e-3 * static_cast<double>((i * 37) % 11));
  return s;
}

TEST(Placement, BaselineWithoutNoiseIsIdentity) {
  const auto s = ramp(100);
  EXPECT_EQ(apply_placement(s, default_profile(Placement::Baseline), 0.0, 1).samples, s.samples);
}

TEST(Placement, GainScalesBeforeSmear) {
  const auto s = ramp(100);
  const auto half = apply_placement(s, {Placement::TopLeft, 0.5, 0}, 0.0, 1);
  for (std::size_t i = 0; i < 100; ++i) EXPECT_DOUBLE_EQ(half.samples[i], 0.5 * s.samples[i]);
  for (double g : {0.55, 0.7, 0.85}) {
    const auto smeared = apply_placement(s, {Placement::Center, g, 2}, 0.0, 1);
    const auto unit = apply_placement(s, {Placement::Center, 1.0, 2}, 0.0, 1);
    for (std::size_t i = 0; i < 100; ++i) EXPECT_NEAR(smeared.samples[i], g * unit.samples[i], 1e-15);
  }
}

TEST(Placement, DefaultProfilesGiveDistinctTraces) {
  const auto s = ramp(200);
  std::vector<std::vector<double>> outs;
  for (auto p : {Placement::Baseline, Placement::TopLeft, Placement::Center, Placement::BottomRight})
    outs.push_back(apply_placement(s, default_profile(p), 0.0, 1).samples);
  for (std::size_t i = 0; i < outs.size(); ++i)
    for (std::size_t j = i + 1; j < outs.size(); ++j) EXPECT_NE(outs[i], outs[j]);
  EXPECT_EQ(default_profile(Placement::TopLeft).gain, 0.55);
  EXPECT_EQ(default_profile(Placement::TopLeft).smear, 3);
  EXPECT_EQ(default_profile(Placement::Center).gain, 0.7);
  EXPECT_EQ(default_profile(Placement::BottomRight).smear, 1);
}

TEST(Placement, NoiseIsSeededAndHasRequestedSpread) {
  VoltageSeries zero;
  zero.samples.assign(20000, 0.0);
  const auto a = apply_placement(zero, default_profile(Placement::Baseline), 1e-3, 42);
  EXPECT_EQ(a.samples, apply_placement(zero, default_profile(Placement::Baseline), 1e-3, 42).samples);
  double ss = 0;
  for (double v : a.samples) ss += v * v;
  EXPECT_NEAR(std::sqrt(ss / 20000), 1e-3, 3e-5);
}

TEST(Placement, ParseRoundTripAndErrors) {
  for (auto p : {Placement::Baseline, Placement::TopLeft, Placement::Center, Placement::BottomRight})
    EXPECT_EQ(parse_placement(to_string(p)), p);
  EXPECT_THROW(parse_placement("middle"), ConfigError);
  EXPECT_THROW(apply_placement(ramp(4), {Placement::Center, 0.0, 0}, 0, 0), ConfigError);
}

}  // namespace
}  // namespace scdet
