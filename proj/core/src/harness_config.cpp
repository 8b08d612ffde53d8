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

#include <openssl/evp.h>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <iomanip>
#include <limits>
#include <type_traits>
#include <sstream>

#include "scdet/byteio.hpp"
#include "scdet/harness.hpp"

namespace scdet {
namespace {

using boost::property_tree::ptree;

// Visits every scalar field as (section, key, reference).
template <class C, class F>
void scalar_fields(C& c, F&& f) {
  f("recipe", "victims", c.victims);
  f("recipe", "traces_per_class", c.traces_per_class);
  f("recipe", "include_benign", c.include_benign);
  f("recipe", "unseen_traces", c.unseen_traces);
  f("recipe", "train_images", c.train_images);
  f("recipe", "pool_images", c.pool_images);
  f("recipe", "poison_rate", c.poison_rate);
  f("recipe", "backdoor_target", c.backdoor_target);
  f("recipe", "frequency_factor", c.frequency_factor);
  f("recipe", "sweep_epochs", c.sweep_epochs);
  f("recipe", "augment_fraction", c.augment_fraction);
  f("recipe", "seed", c.seed);

  f("victim", "min_depth", c.menu.min_depth);
  f("victim", "max_depth", c.menu.max_depth);
  f("victim", "min_feature_side", c.menu.min_feature_side);
  f("victim", "max_macs", c.menu.max_macs);
  f("victim", "max_attempts", c.menu.max_attempts);
  f("victim", "epochs", c.victim.epochs);
  f("victim", "lr", c.victim.lr);
  f("victim", "batch", c.victim.batch);
  f("victim", "min_train_accuracy", c.victim.min_train_accuracy);
  f("victim", "max_failed_fraction", c.victim.max_failed_fraction);
  f("victim", "regenerate_flagged", c.victim.regenerate_flagged);
  f("victim", "max_regenerations", c.victim.max_regenerations);
  f("victim", "calibration_samples", c.victim.calibration_samples);
  f("victim", "mac_lanes", c.schedule.mac_lanes);

  f("pdn", "R", c.pdn.R);
  f("pdn", "L", c.pdn.L);
  f("pdn", "C", c.pdn.C);
  f("pdn", "dt", c.pdn.dt);
  f("pdn", "i_per_toggle", c.pdn.i_per_toggle);
  f("pdn", "noise_sigma", c.pdn.noise_sigma);

  f("tdc", "taps", c.tdc.taps);
  f("tdc", "coarse_max", c.tdc.coarse_max);
  f("tdc", "fine_max", c.tdc.fine_max);
  f("tdc", "coarse_unit_ps", c.tdc.coarse_unit_ps);
  f("tdc", "fine_unit_ps", c.tdc.fine_unit_ps);
  f("tdc", "tap_unit_ps", c.tdc.tap_unit_ps);
  f("tdc", "sensor_clock_hz", c.tdc.sensor_clock_hz);
  f("tdc", "bus_clock_hz", c.tdc.bus_clock_hz);
  f("tdc", "sensitivity", c.tdc.sensitivity);

  f("attacks", "fgsm_eps", c.adversarial.fgsm_eps);
  f("attacks", "pgd_eps", c.adversarial.pgd_eps);
  f("attacks", "pgd_step", c.adversarial.pgd_step);
  f("attacks", "pgd_steps", c.adversarial.pgd_steps);
  f("attacks", "cw_c_min", c.adversarial.cw_c_min);
  f("attacks", "cw_c_max", c.adversarial.cw_c_max);
  f("attacks", "cw_search_steps", c.adversarial.cw_search_steps);
  f("attacks", "cw_max_iter", c.adversarial.cw_max_iter);
  f("attacks", "cw_lr", c.adversarial.cw_lr);
  f("attacks", "cw_kappa", c.adversarial.cw_kappa);
  f("attacks", "deepfool_max_iter", c.adversarial.deepfool_max_iter);
  f("attacks", "deepfool_overshoot", c.adversarial.deepfool_overshoot);
  f("attacks", "jbda_lambda", c.extraction.lambda);
  f("attacks", "jbda_lr", c.extraction.lr);
  f("attacks", "jbda_epochs", c.extraction.epochs);
  f("attacks", "jbda_rounds", c.extraction.rounds);
  f("attacks", "jbda_batch", c.extraction.batch);

  f("detector", "window", c.detector.window);
  f("detector", "rows", c.detector.rows);
  f("detector", "trace_len", c.detector.trace_len);
  f("detector", "rnn_layers", c.detector.rnn_layers);
  f("detector", "hidden", c.detector.hidden);
  f("detector", "conv_channels", c.detector.conv_channels);
  f("detector", "conv_kernel", c.detector.conv_kernel);
  f("detector", "dropout", c.detector.dropout);
  f("detector", "epochs", c.detector.epochs);
  f("detector", "lr", c.detector.lr);
  f("detector", "batch", c.detector.batch);
  f("detector", "seed", c.detector.seed);

  f("avoidance", "d_prime", c.avoidance.d_prime);
  f("avoidance", "sigma", c.avoidance.sigma);
  f("avoidance", "eta", c.avoidance.eta);
  f("avoidance", "mu", c.avoidance.mu);
  f("avoidance", "epsilon", c.avoidance.epsilon);
  f("avoidance", "p", c.avoidance.p);
  f("avoidance", "iters", c.avoidance.iters);
  f("avoidance", "budget", c.avoidance.budget);
  f("avoidance", "repeats", c.avoidance.repeats);
  f("avoidance", "unclamped_theta", c.avoidance.unclamped_theta);
  f("avoidance", "seed", c.avoidance.seed);
}

std::string join_methods(const std::vector<AttackMethod>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + to_string(v[i]);
  return s;
}

std::vector<AttackMethod> split_methods(const std::string& s) {
  std::vector<AttackMethod> out;
  std::istringstream is(s);
  std::string tok;
  while (std::getline(is, tok, ',')) {
    tok.erase(0, tok.find_first_not_of(" \t"));
    tok.erase(tok.find_last_not_of(" \t") + 1);
    if (!tok.empty()) out.push_back(parse_attack_method(tok));
  }
  return out;
}

std::string mode_name(ReadoutMode m) {
  switch (m) {
    case ReadoutMode::Raw: return "raw";
    case ReadoutMode::Sum: return "sum";
    case ReadoutMode::ExpSum: return "exp_sum";
  }
  return "?";
}

ReadoutMode parse_mode(const std::string& s) {
  if (s == "raw") return ReadoutMode::Raw;
  if (s == "sum") return ReadoutMode::Sum;
  if (s == "exp_sum") return ReadoutMode::ExpSum;
  throw ConfigError("unknown readout mode '" + s + "'");
}

template <class T>
void parse_value(const std::string& text, const char* key, T& out) {
  const auto bad = [&] { return ConfigError("config: bad value '" + text + "' for " + key); };
  if constexpr (std::is_same_v<T, bool>) {
    if (text == "true" || text == "1") out = true;
    else if (text == "false" || text == "0") out = false;
    else throw bad();
  } else {
    std::size_t used = 0;
    try {
      if constexpr (std::is_floating_point_v<T>) {
        out = std::stod(text, &used);
      } else if constexpr (std::is_signed_v<T>) {
        const long long v = std::stoll(text, &used);
        if (v < std::numeric_limits<T>::min() || v > std::numeric_limits<T>::max()) throw bad();
        out = static_cast<T>(v);
      } else {
        if (text.find('-') != std::string::npos) throw bad();
        out = static_cast<T>(std::stoull(text, &used));
      }
    } catch (const std::logic_error&) {
      throw bad();
    }
    if (used != text.size()) throw bad();
  }
}

}  // namespace

void HarnessConfig::validate() const {
  if (victims < 1) throw ConfigError("recipe needs at least one victim");
  if (traces_per_class < 1 || unseen_traces < 0) throw ConfigError("trace counts must be positive");
  if (roster.empty() && !include_benign) throw ConfigError("recipe has no trace classes");
  for (auto m : roster)
    if (m == AttackMethod::None) throw ConfigError("'benign' is controlled by include_benign, not the roster");
  if (train_images < 10 || pool_images < 10) throw ConfigError("image counts are too small");
  if (!(poison_rate >= 0 && poison_rate <= 1)) throw ConfigError("poison_rate must lie in [0, 1]");
  if (backdoor_target < 0 || backdoor_target >= menu.classes) throw ConfigError("backdoor target is not a class");
  if (frequency_factor < 1 || frequency_factor > 255) throw ConfigError("frequency factor must lie in [1, 255]");
  if (sweep_epochs < 1) throw ConfigError("sweep_epochs must be positive");
  if (!(augment_fraction >= 0 && augment_fraction <= 1)) throw ConfigError("augment_fraction must lie in [0, 1]");
  if (schedule.mac_lanes < 1) throw ConfigError("mac_lanes must be positive");
  pdn.validate();
  tdc.validate();
  detector.validate();
  avoidance.validate();
}

HarnessConfig parse_config(const std::string& text) {
  ptree pt;
  std::istringstream is(text);
  try {
    boost::property_tree::read_ini(is, pt);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  static const std::map<std::string, std::vector<std::string>> known = [] {
    std::map<std::string, std::vector<std::string>> k;
    HarnessConfig c;
    scalar_fields(c, [&](const char* s, const char* key, auto&) { k[s].push_back(key); });
    for (const char* key : {"name", "roster", "unseen", "placement"}) k["recipe"].push_back(key);
    k["tdc"].push_back("readout_mode");
    return k;
  }();
  for (const auto& [section, body] : pt) {
    const auto it = known.find(section);
    if (it == known.end()) throw ConfigError("config: unknown section [" + section + "]");
    for (const auto& [key, value] : body)
      if (std::find(it->second.begin(), it->second.end(), key) == it->second.end())
        throw ConfigError("config: unknown key '" + key + "' in [" + section + "]");
  }
  HarnessConfig c;
  try {
    scalar_fields(c, [&](const char* s, const char* key, auto& ref) {
      if (auto v = pt.get_optional<std::string>(std::string(s) + "." + key)) parse_value(*v, key, ref);
    });
    c.name = pt.get("recipe.name", c.name);
    if (auto r = pt.get_optional<std::string>("recipe.roster")) c.roster = split_methods(*r);
    if (auto r = pt.get_optional<std::string>("recipe.unseen")) c.unseen = split_methods(*r);
    if (auto r = pt.get_optional<std::string>("recipe.placement")) c.placement = parse_placement(*r);
    if (auto r = pt.get_optional<std::string>("tdc.readout_mode")) c.tdc.readout_mode = parse_mode(*r);
  } catch (const boost::property_tree::ptree_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

HarnessConfig load_config(const std::string& path) {
  std::string text;
  try {
    text = byteio::read_file(path);
  } catch (const DataError& e) {
    throw ConfigError(e.what());
  }
  return parse_config(text);
}

std::string config_text(const HarnessConfig& c) {
  std::map<std::string, std::vector<std::pair<std::string, std::string>>> sections;
  std::vector<std::string> order;
  auto put = [&](const std::string& s, const std::string& k, const std::string& v) {
    if (!sections.count(s)) order.push_back(s);
    sections[s].emplace_back(k, v);
  };
  put("recipe", "name", c.name);
  put("recipe", "roster", join_methods(c.roster));
  put("recipe", "unseen", join_methods(c.unseen));
  put("recipe", "placement", to_string(c.placement));
  auto& mc = const_cast<HarnessConfig&>(c);
  scalar_fields(mc, [&](const char* s, const char* key, auto& ref) {
    std::ostringstream os;
    os << std::setprecision(17) << std::boolalpha << ref;
    put(s, key, os.str());
  });
  put("tdc", "readout_mode", mode_name(c.tdc.readout_mode));
  std::string out;
  for (const auto& s : order) {
    out += "[" + s + "]\n";
    for (const auto& [k, v] : sections[s]) out += k + "=" + v + "\n";
    out += "\n";
  }
  return out;
}

HarnessConfig full_scale(HarnessConfig c) {
  c.name += "-full";
  c.victims = 400;
  c.traces_per_class = 5000;
  c.unseen_traces = 1000;
  c.sweep_epochs = c.detector.epochs;
  return c;
}

std::string sha1_hex(std::string_view data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha1(), nullptr) != 1)
    throw Error("SHA-1 digest failed");
  std::ostringstream os;
  for (unsigned i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return os.str();
}

std::string to_string(TableKind k) {
  switch (k) {
    case TableKind::RnnSweep: return "rnn_sweep";
    case TableKind::Accuracy: return "accuracy";
    case TableKind::Frequency: return "frequency";
    case TableKind::Location: return "location";
    case TableKind::Unseen: return "unseen";
  }
  return "?";
}

TableKind parse_table(const std::string& s) {
  for (auto k : {TableKind::RnnSweep, TableKind::Accuracy, TableKind::Frequency, TableKind::Location, TableKind::Unseen})
    if (to_string(k) == s) return k;
  throw ConfigError("unknown table '" + s + "' (rnn_sweep, accuracy, frequency, location, unseen)");
}

}  // namespace scdet
