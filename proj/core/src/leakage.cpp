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

#include "scdet/leakage.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <random>

namespace scdet {

void PDNParams::validate() const {
  if (!(R > 0 && L > 0 && C > 0 && dt > 0 && i_per_toggle > 0))
    throw ConfigError("PDN R, L, C, dt and i_per_toggle must be strictly positive");
  if (!(noise_sigma >= 0) || !std::isfinite(noise_sigma)) throw ConfigError("PDN noise_sigma must be >= 0");
}

void PlacementProfile::validate() const {
  if (!(gain > 0 && gain <= 1)) throw ConfigError("placement gain must lie in (0, 1]");
  if (smear < 0) throw ConfigError("placement smear must be nonnegative");
}

PlacementProfile default_profile(Placement p) {
  switch (p) {
    case Placement::Baseline: return {p, 1.0, 0};
    case Placement::TopLeft: return {p, 0.55, 3};
    case Placement::Center: return {p, 0.7, 2};
    case Placement::BottomRight: return {p, 0.85, 1};
  }
  throw ConfigError("unknown placement");
}

std::string to_string(Placement p) {
  switch (p) {
    case Placement::Baseline: return "baseline";
    case Placement::TopLeft: return "top-left";
    case Placement::Center: return "center";
    case Placement::BottomRight: return "bottom-right";
  }
  return "?";
}

Placement parse_placement(const std::string& s) {
  for (auto p : {Placement::Baseline, Placement::TopLeft, Placement::Center, Placement::BottomRight})
    if (to_string(p) == s) return p;
  throw ConfigError("unknown placement profile '" + s + "'");
}

std::vector<std::uint32_t> switching_activity(const OpStream& stream) {
  std::vector<std::uint32_t> out(stream.cycles());
  std::vector<std::uint8_t> prev;
  for (std::size_t t = 0; t < stream.cycles(); ++t) {
    const auto w = stream.words(t);
    if (prev.size() < w.size()) prev.resize(w.size(), 0);
    std::uint32_t toggles = 0;
    for (std::size_t lane = 0; lane < prev.size(); ++lane) {
      const std::uint8_t cur = lane < w.size() ? w[lane] : 0;
      toggles += static_cast<std::uint32_t>(std::popcount(static_cast<unsigned>(cur ^ prev[lane])));
      prev[lane] = cur;
    }
    out[t] = toggles;
  }
  return out;
}

std::vector<double> pdn_raw_drop(std::span<const std::uint32_t> activity, const PDNParams& p) {
  p.validate();
  std::vector<double> v(activity.size());
  double i_prev = 0;
  for (std::size_t t = 0; t < activity.size(); ++t) {
    const double i = p.i_per_toggle * activity[t];
    v[t] = i * p.R + p.L * (i - i_prev) / p.dt;
    i_prev = i;
  }
  return v;
}

VoltageSeries pdn_filter(std::span<const std::uint32_t> activity, const PDNParams& p, bool clamp) {
  VoltageSeries out;
  out.samples = pdn_raw_drop(activity, p);
  const double alpha = p.dt / (p.R * p.C + p.dt);
  double y = 0;
  for (auto& v : out.samples) {
    y += alpha * (v - y);
    v = clamp ? std::max(0.0, y) : y;
  }
  return out;
}

VoltageSeries apply_placement(const VoltageSeries& series, const PlacementProfile& profile, double noise_sigma,
                              std::uint64_t seed) {
  profile.validate();
  if (!(noise_sigma >= 0)) throw ConfigError("noise_sigma must be >= 0");
  VoltageSeries out = series;
  const auto& x = series.samples;
  const std::size_t w = static_cast<std::size_t>(profile.smear) + 1;
  for (std::size_t t = 0; t < x.size(); ++t) {
    const std::size_t lo = t + 1 >= w ? t + 1 - w : 0;
    double sum = 0;
    for (std::size_t k = lo; k <= t; ++k) sum += profile.gain * x[k];
    out.samples[t] = sum / static_cast<double>(t + 1 - lo);
  }
  if (noise_sigma > 0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, noise_sigma);
    for (auto& v : out.samples) v += noise(rng);
  }
  return out;
}

}  // namespace scdet
