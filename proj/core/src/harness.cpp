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

#include "scdet/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>

#include "scdet/byteio.hpp"
#include "scdet/datasets.hpp"
#include "scdet/quantize.hpp"
#include "scdet/training.hpp"

namespace scdet {
namespace {

// Seed namespaces; every product of an Experiment draws from its own stream.
enum Stream : std::uint64_t {
  kTrainImages = 1,
  kEvalImages,
  kPools,
  kVictimSpecs,
  kItems,
  kUnseenItems,
  kTraceNoise,
  kUnseenNoise,
  kSplit,
  kTriggers,
  kBackdoor,
  kLocation,
  kAugment,
  kSurrogate,
};

std::uint64_t derive(std::uint64_t seed, std::uint64_t stream, std::uint64_t a = 0, std::uint64_t b = 0) {
  return mix_seed(mix_seed(mix_seed(seed, stream), a), b);
}

std::optional<TriggerKind> trigger_of(AttackMethod m) {
  switch (m) {
    case AttackMethod::PatternTrigger: return TriggerKind::Pattern;
    case AttackMethod::InstanceTrigger: return TriggerKind::Instance;
    case AttackMethod::Watermark: return TriggerKind::Watermark;
    case AttackMethod::SquareTrigger: return TriggerKind::Square3x3;
    default: return std::nullopt;
  }
}

std::optional<ExtractionSource> source_of(AttackMethod m) {
  switch (m) {
    case AttackMethod::FashionSurrogate: return ExtractionSource::Fashion;
    case AttackMethod::Cifar10Surrogate: return ExtractionSource::Cifar10;
    case AttackMethod::Cifar100Surrogate: return ExtractionSource::Cifar100;
    case AttackMethod::JBDA: return ExtractionSource::JBDA;
    default: return std::nullopt;
  }
}

SyntheticFamily family_of(ExtractionSource s) {
  switch (s) {
    case ExtractionSource::Fashion: return SyntheticFamily::Fashion;
    case ExtractionSource::Cifar10: return SyntheticFamily::Cifar10;
    case ExtractionSource::Cifar100: return SyntheticFamily::Cifar100;
    case ExtractionSource::JBDA: return SyntheticFamily::Digits;
  }
  return SyntheticFamily::Digits;
}

class Stopwatch {
 public:
  Stopwatch(std::vector<StageTiming>& out, std::string stage) : out_(out), stage_(std::move(stage)) {}
  ~Stopwatch() {
    out_.push_back({stage_, std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count()});
  }

 private:
  std::vector<StageTiming>& out_;
  std::string stage_;
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::vector<Trace> pick(std::span<const Trace> all, std::span<const std::size_t> idx) {
  std::vector<Trace> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(all[i]);
  return out;
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4) << v;
  return os.str();
}

}  // namespace

Split split_by_label(std::span<const int> labels, std::uint64_t seed, double train_fraction) {
  if (!(train_fraction > 0 && train_fraction < 1)) throw ConfigError("train fraction must lie in (0, 1)");
  std::map<int, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < labels.size(); ++i) groups[labels[i]].push_back(i);
  Split s;
  for (auto& [label, idx] : groups) {
    std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(label)));
    std::shuffle(idx.begin(), idx.end(), rng);
    auto n_train = static_cast<std::size_t>(std::lround(train_fraction * static_cast<double>(idx.size())));
    if (n_train == idx.size() && idx.size() > 1) --n_train;
    s.train.insert(s.train.end(), idx.begin(), idx.begin() + static_cast<long>(n_train));
    s.test.insert(s.test.end(), idx.begin() + static_cast<long>(n_train), idx.end());
  }
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

struct Experiment::Impl {
  std::optional<std::vector<TrainedVictim>> victims;
  std::optional<Dataset> train_images, eval_images;
  std::map<SyntheticFamily, Dataset> pools;
  std::map<std::pair<std::uint32_t, TriggerKind>, TriggerSpec> triggers;
  std::map<std::pair<std::uint32_t, TriggerKind>, QuantizedNetwork> backdoored;
  std::optional<std::vector<InputItem>> items, unseen;
  std::optional<Split> split;
  std::optional<std::vector<Trace>> traces;
  std::optional<CalibrationResult> calib;
  std::map<std::string, DetectorTraining> detectors;
};

Experiment::Experiment(HarnessConfig cfg) : cfg_(std::move(cfg)), impl_(std::make_unique<Impl>()) {
  cfg_.validate();
}
Experiment::~Experiment() = default;

const std::vector<TrainedVictim>& Experiment::victims() {
  if (!impl_->victims) {
    Stopwatch sw(timings_, "victims");
    if (!impl_->train_images)
      impl_->train_images = synthetic_dataset(SyntheticFamily::Digits, cfg_.train_images, derive(cfg_.seed, kTrainImages));
    std::vector<VictimSpec> specs;
    for (int i = 0; i < cfg_.victims; ++i)
      specs.push_back(generate_victim(derive(cfg_.seed, kVictimSpecs, static_cast<std::uint64_t>(i)), cfg_.menu));
    impl_->victims = train_victims(specs, *impl_->train_images, cfg_.victim, cfg_.menu);
  }
  return *impl_->victims;
}

const Dataset& Experiment::eval_images() {
  if (!impl_->eval_images)
    impl_->eval_images = synthetic_dataset(SyntheticFamily::Digits, cfg_.pool_images, derive(cfg_.seed, kEvalImages));
  return *impl_->eval_images;
}

namespace {

const Dataset& pool_of(std::map<SyntheticFamily, Dataset>& pools, SyntheticFamily f, const HarnessConfig& cfg) {
  auto it = pools.find(f);
  if (it == pools.end())
    it = pools.emplace(f, synthetic_dataset(f, cfg.pool_images, derive(cfg.seed, kPools, static_cast<std::uint64_t>(f))))
             .first;
  return it->second;
}

}  // namespace

const QuantizedNetwork& Experiment::model_for(std::uint32_t victim, AttackMethod method) {
  const auto& vs = victims();
  if (victim >= vs.size()) throw ConfigError("victim id " + std::to_string(victim) + " out of range");
  const auto kind = trigger_of(method);
  if (!kind) return vs[victim].model;
  const auto key = std::make_pair(victim, *kind);
  if (auto it = impl_->backdoored.find(key); it != impl_->backdoored.end()) return it->second;
  if (!impl_->triggers.count(key)) {
    const auto& fashion = pool_of(impl_->pools, SyntheticFamily::Fashion, cfg_);
    const Tensor instance = fashion.sample(victim % fashion.size());
    impl_->triggers.emplace(key, make_trigger(*kind, derive(cfg_.seed, kTriggers, victim), &instance));
  }
  TrainOptions opts;
  opts.epochs = cfg_.victim.epochs;
  opts.lr = cfg_.victim.lr;
  opts.batch = cfg_.victim.batch;
  opts.seed = derive(cfg_.seed, kBackdoor, victim, static_cast<std::uint64_t>(*kind));
  const auto& train = *impl_->train_images;
  auto bd = poison_and_train(train, eval_images(), impl_->triggers.at(key), cfg_.poison_rate, cfg_.backdoor_target,
                             vs[victim].spec.layers, opts.seed, opts);
  const std::size_t nc = std::min(cfg_.victim.calibration_samples, train.size());
  std::vector<std::size_t> first(nc);
  std::iota(first.begin(), first.end(), 0);
  return impl_->backdoored.emplace(key, quantize_network(bd.model, train.gather(first))).first->second;
}

// Builds the input images for one (victim, method) group.
Tensor Experiment::make_group(std::uint32_t v, AttackMethod m, std::size_t k, std::uint64_t stream) {
  Experiment& ex = *this;
  Impl& impl = *impl_;
  const HarnessConfig& cfg = cfg_;
  const Dataset& digits = ex.eval_images();
  std::mt19937_64 rng(derive(cfg.seed, stream, v, static_cast<std::uint64_t>(m)));
  std::vector<std::size_t> idx(digits.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  std::vector<std::size_t> take(k);
  for (std::size_t i = 0; i < k; ++i) take[i] = idx[i % idx.size()];
  const Tensor x = digits.gather(take);
  const auto labels = digits.gather_labels(take);
  const Network& net = ex.victims()[v].model.net;
  const auto& a = cfg.adversarial;
  const std::uint64_t s = derive(cfg.seed, stream, v, 100 + static_cast<std::uint64_t>(m));
  switch (m) {
    case AttackMethod::None: return x;
    case AttackMethod::FGSM: return fgsm(net, x, labels, a.fgsm_eps);
    case AttackMethod::PGD: return pgd(net, x, labels, a.pgd_eps, a.pgd_step, a.pgd_steps);
    case AttackMethod::CW: return cw_l2(net, x, labels, a).x_adv;
    case AttackMethod::DeepFool: return deepfool(net, x, a).x_adv;
    case AttackMethod::PatternTrigger:
    case AttackMethod::InstanceTrigger:
    case AttackMethod::Watermark:
    case AttackMethod::SquareTrigger: {
      ex.model_for(v, m);  // creates the trigger alongside the backdoored model
      return apply_trigger(x, impl.triggers.at({v, *trigger_of(m)}));
    }
    case AttackMethod::FashionSurrogate:
    case AttackMethod::Cifar10Surrogate:
    case AttackMethod::Cifar100Surrogate: {
      const auto src = *source_of(m);
      const Dataset& pool = pool_of(impl.pools, family_of(src), cfg);
      if (k <= pool.size()) return extraction_queries(src, net, pool, k, cfg.extraction, s);
      return pool.gather(take);
    }
    case AttackMethod::JBDA: {
      // Keep the synthesized tail of the query stream, not the seed images.
      const Dataset seeds{x, labels};
      const Tensor q = extraction_queries(ExtractionSource::JBDA, net, seeds, k, cfg.extraction, s);
      const auto total = static_cast<std::size_t>(q.dim(0));
      std::vector<std::size_t> tail(k);
      std::iota(tail.begin(), tail.end(), total - k);
      return Dataset{q, std::vector<int>(total, 0)}.gather(tail);
    }
  }
  throw ConfigError("unsupported attack method");
}

std::vector<InputItem> Experiment::build_items(const std::vector<std::pair<std::uint32_t, AttackMethod>>& plan,
                                               std::uint64_t stream) {
  std::map<std::pair<std::uint32_t, AttackMethod>, std::vector<std::size_t>> groups;
  for (std::size_t j = 0; j < plan.size(); ++j) groups[plan[j]].push_back(j);
  std::vector<InputItem> items(plan.size());
  constexpr std::size_t n = 28 * 28;
  for (const auto& [key, members] : groups) {
    Tensor imgs;
    try {
      imgs = make_group(key.first, key.second, members.size(), stream);
    } catch (const Error& e) {
      throw ExperimentError("victim " + std::to_string(key.first) + ", attack " + to_string(key.second) + ": " +
                            e.what());
    }
    for (std::size_t i = 0; i < members.size(); ++i) {
      auto& it = items[members[i]];
      it.victim = key.first;
      it.method = key.second;
      it.image.assign(imgs.data() + i * n, imgs.data() + (i + 1) * n);
    }
  }
  return items;
}

const std::vector<InputItem>& Experiment::items() {
  if (!impl_->items) {
    victims();
    Stopwatch sw(timings_, "attack inputs");
    std::vector<std::vector<AttackMethod>> by_label(kNumTraceLabels);
    if (cfg_.include_benign) by_label[0].push_back(AttackMethod::None);
    for (auto m : cfg_.roster) by_label[static_cast<std::size_t>(label_of(m))].push_back(m);
    const auto V = static_cast<std::uint32_t>(cfg_.victims);
    std::vector<std::pair<std::uint32_t, AttackMethod>> plan;
    for (const auto& methods : by_label) {
      if (methods.empty()) continue;
      const bool per_victim = trigger_of(methods[0]).has_value();
      for (int j = 0; j < cfg_.traces_per_class; ++j) {
        const auto v = static_cast<std::uint32_t>(j) % V;
        const std::size_t round = static_cast<std::size_t>(j) / V;
        // Each victim carries one backdoor, so trigger methods rotate across victims only.
        const std::size_t which = per_victim ? v % methods.size() : (round + v) % methods.size();
        plan.push_back({v, methods[which]});
      }
    }
    impl_->items = build_items(plan, kItems);
  }
  return *impl_->items;
}

const std::vector<InputItem>& Experiment::unseen_items() {
  if (!impl_->unseen) {
    victims();
    Stopwatch sw(timings_, "unseen inputs");
    std::vector<std::pair<std::uint32_t, AttackMethod>> plan;
    for (auto m : cfg_.unseen)
      for (int j = 0; j < cfg_.unseen_traces; ++j)
        plan.push_back({static_cast<std::uint32_t>(j % cfg_.victims), m});
    impl_->unseen = build_items(plan, kUnseenItems);
  }
  return *impl_->unseen;
}

const Split& Experiment::split() {
  if (!impl_->split) {
    std::vector<int> labels;
    for (const auto& it : items()) labels.push_back(static_cast<int>(label_of(it.method)));
    impl_->split = split_by_label(labels, derive(cfg_.seed, kSplit));
  }
  return *impl_->split;
}

Trace Experiment::render_one(const InputItem& item, Placement placement, int factor, std::uint64_t noise_seed) {
  if (!impl_->calib) impl_->calib = calibrate(cfg_.tdc);
  const QuantizedNetwork& q = model_for(item.victim, item.method);
  const Tensor x(kVictimInputShape, item.image);
  auto series = pdn_filter(switching_activity(emit_schedule(q, x, cfg_.schedule)), cfg_.pdn);
  series.model_id = item.victim;
  series.label = static_cast<int>(label_of(item.method));
  const auto noisy = apply_placement(series, default_profile(placement), cfg_.pdn.noise_sigma, noise_seed);
  Trace t = sample_trace(noisy, cfg_.tdc, *impl_->calib, factor);
  t.attack = item.method;
  t.placement = placement;
  return t;
}

std::vector<Trace> Experiment::render(std::span<const InputItem> items, Placement placement, int factor,
                                      std::uint64_t stream) {
  std::vector<Trace> out;
  out.reserve(items.size());
  for (std::size_t i = 0; i < items.size(); ++i) out.push_back(render_one(items[i], placement, factor, mix_seed(stream, i)));
  return out;
}

const std::vector<Trace>& Experiment::traces() {
  if (!impl_->traces) {
    const auto& it = items();
    Stopwatch sw(timings_, "traces");
    impl_->traces = render(it, cfg_.placement, cfg_.frequency_factor, derive(cfg_.seed, kTraceNoise));
  }
  return *impl_->traces;
}

const DetectorTraining& Experiment::detector(const DetectorConfig& dc) {
  const std::string key = to_text(dc);
  if (auto it = impl_->detectors.find(key); it != impl_->detectors.end()) return it->second;
  const auto& all = traces();
  const auto train = pick(all, split().train);
  Stopwatch sw(timings_, "detector N=" + std::to_string(dc.rnn_layers) + " D=" + std::to_string(dc.hidden) +
                             " w=" + std::to_string(dc.window));
  return impl_->detectors.emplace(key, train_detector(preprocess_traces(train, dc), dc)).first->second;
}

DetectorConfig frequency_detector(const DetectorConfig& base, int factor, int window) {
  if (factor < 1 || window < 1) throw ConfigError("factor and window must be positive");
  DetectorConfig dc = base;
  const long covered = static_cast<long>(base.window) * base.trace_len;
  const long per_col = static_cast<long>(factor) * window * base.rows;
  const long cols = std::max<long>((covered + per_col - 1) / per_col, base.conv_kernel);
  dc.window = window;
  dc.trace_len = static_cast<int>(cols * base.rows);
  dc.validate();
  return dc;
}

namespace {

DetectorConfig sweep_base(const HarnessConfig& cfg) {
  DetectorConfig dc = cfg.detector;
  dc.epochs = cfg.sweep_epochs;
  return dc;
}

double train_accuracy(const Network& model, std::span<const Trace> train, const DetectorConfig& dc) {
  return evaluate(model, preprocess_traces(train, dc)).total_acc;
}

TableResult rnn_sweep(Experiment& ex, const TableOptions& opt) {
  const auto& cfg = ex.config();
  const auto& all = ex.traces();
  const auto train = pick(all, ex.split().train), test = pick(all, ex.split().test);
  TableResult r{"rnn_sweep", "N,D,train_acc,test_acc\n", "", {}};
  std::map<int, PlotSeries> lines;
  for (int d : opt.hidden)
    for (int n : opt.rnn_layers) {
      DetectorConfig dc = sweep_base(cfg);
      dc.rnn_layers = n;
      dc.hidden = d;
      const auto& model = ex.detector(dc).model;
      const double tr = train_accuracy(model, train, dc);
      const double te = evaluate(model, preprocess_traces(test, dc)).total_acc;
      r.csv += std::to_string(n) + "," + std::to_string(d) + "," + fmt(tr) + "," + fmt(te) + "\n";
      r.rows.push_back({double(n), double(d), tr, te});
      auto& s = lines[d];
      s.label = "D=" + std::to_string(d) + " test";
      s.x.push_back(n);
      s.y.push_back(te);
    }
  std::vector<PlotSeries> series;
  for (auto& [d, s] : lines) series.push_back(s);
  r.svg = svg_line_plot("RNN depth and width", "RNN layers N", "test accuracy", series);
  return r;
}

TableResult accuracy_table(Experiment& ex) {
  const auto& dc = ex.config().detector;
  const auto test = pick(ex.traces(), ex.split().test);
  const auto rep = evaluate(ex.detector(dc).model, preprocess_traces(test, dc));
  TableResult r{"accuracy", "metric,value\n", "", {}};
  const std::vector<std::pair<std::string, double>> rows{
      {"benign", rep.per_class_acc[0]},   {"adversarial", rep.per_class_acc[1]}, {"backdoor", rep.per_class_acc[2]},
      {"extraction", rep.per_class_acc[3]}, {"total", rep.total_acc},            {"merged", rep.merged_acc},
      {"fpr", rep.fpr}};
  PlotSeries s{"test", {}, {}};
  std::vector<std::string> labels;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    r.csv += rows[i].first + "," + fmt(rows[i].second) + "\n";
    r.rows.push_back({rows[i].second});
    labels.push_back(rows[i].first);
    s.x.push_back(double(i));
    s.y.push_back(rows[i].second);
  }
  r.svg = svg_bar_plot("Detection accuracy", labels, std::span<const PlotSeries>(&s, 1));
  return r;
}

TableResult frequency_table(Experiment& ex, const TableOptions& opt) {
  const auto& cfg = ex.config();
  const auto& split = ex.split();
  TableResult r{"frequency", "factor,window,test_acc,merged_acc\n", "", {}};
  std::map<int, PlotSeries> lines;
  for (int f : opt.factors) {
    const std::vector<Trace> rendered =
        f == cfg.frequency_factor ? ex.traces()
                                  : ex.render(ex.items(), cfg.placement, f, derive(cfg.seed, kTraceNoise));
    const auto train = pick(rendered, split.train), test = pick(rendered, split.test);
    for (int w : opt.windows) {
      // The configured factor and window reuse the accuracy recipe's detector,
      // so that row matches the accuracy table.
      const bool base = f == cfg.frequency_factor && w == cfg.detector.window;
      const DetectorConfig dc = base ? cfg.detector : frequency_detector(sweep_base(cfg), f, w);
      DetectionReport rep;
      if (f == cfg.frequency_factor) {
        rep = evaluate(ex.detector(dc).model, preprocess_traces(test, dc));
      } else {
        const auto model = train_detector(preprocess_traces(train, dc), dc).model;
        rep = evaluate(model, preprocess_traces(test, dc));
      }
      r.csv += std::to_string(f) + "," + std::to_string(w) + "," + fmt(rep.total_acc) + "," + fmt(rep.merged_acc) + "\n";
      r.rows.push_back({double(f), double(w), rep.total_acc, rep.merged_acc});
      auto& s = lines[w];
      s.label = "window " + std::to_string(w);
      s.x.push_back(f);
      s.y.push_back(rep.total_acc);
    }
  }
  std::vector<PlotSeries> series;
  for (auto& [w, s] : lines) series.push_back(s);
  r.svg = svg_line_plot("Sampling frequency", "frequency reduction factor", "test accuracy", series);
  return r;
}

TableResult location_table(Experiment& ex) {
  const auto& cfg = ex.config();
  const auto& items = ex.items();
  const auto& split = ex.split();
  const DetectorConfig dc = sweep_base(cfg);
  const auto base_train = pick(ex.traces(), split.train);
  const std::array<Placement, 3> locs{Placement::TopLeft, Placement::Center, Placement::BottomRight};
  // Augmented training adds a fraction of the training set rendered at each location.
  auto aug_train = base_train;
  const auto n_aug = static_cast<std::size_t>(std::lround(cfg.augment_fraction * static_cast<double>(split.train.size())));
  for (auto loc : locs) {
    auto idx = split.train;
    std::mt19937_64 rng(derive(cfg.seed, kAugment, static_cast<std::uint64_t>(loc)));
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(std::min(n_aug, idx.size()));
    std::sort(idx.begin(), idx.end());
    for (auto i : idx)
      aug_train.push_back(ex.render_one(items[i], loc, cfg.frequency_factor,
                                        derive(cfg.seed, kAugment, 100 + static_cast<std::uint64_t>(loc), i)));
  }
  const auto& plain = ex.detector(dc).model;
  const auto augmented = train_detector(preprocess_traces(aug_train, dc), dc).model;
  TableResult r{"location", "location,acc_without_aug,acc_with_aug\n", "", {}};
  PlotSeries without{"w/o aug", {}, {}}, with{"w/ aug", {}, {}};
  std::vector<std::string> labels;
  for (auto loc : locs) {
    std::vector<Trace> test;
    for (auto i : split.test)
      test.push_back(ex.render_one(items[i], loc, cfg.frequency_factor,
                                   derive(cfg.seed, kLocation, static_cast<std::uint64_t>(loc), i)));
    const auto data = preprocess_traces(test, dc);
    const double a = evaluate(plain, data).total_acc, b = evaluate(augmented, data).total_acc;
    r.csv += to_string(loc) + "," + fmt(a) + "," + fmt(b) + "\n";
    r.rows.push_back({double(static_cast<int>(loc)), a, b});
    labels.push_back(to_string(loc));
    without.x.push_back(double(labels.size() - 1));
    without.y.push_back(a);
    with.x.push_back(double(labels.size() - 1));
    with.y.push_back(b);
  }
  const std::array<PlotSeries, 2> series{without, with};
  r.svg = svg_bar_plot("Sensor location", labels, series);
  return r;
}

TableResult unseen_table(Experiment& ex) {
  const auto& cfg = ex.config();
  const auto& dc = cfg.detector;
  const auto& model = ex.detector(dc).model;
  const auto& items = ex.unseen_items();
  const auto traces = ex.render(items, cfg.placement, cfg.frequency_factor, derive(cfg.seed, kUnseenNoise));
  TableResult r{"unseen", "method,label,accuracy,merged_accuracy,benign_rate\n", "", {}};
  PlotSeries s{"accuracy", {}, {}};
  std::vector<std::string> labels;
  for (auto m : cfg.unseen) {
    std::vector<Trace> sel;
    for (const auto& t : traces)
      if (t.attack == m) sel.push_back(t);
    if (sel.empty()) continue;
    const auto pred = predict_labels(model, preprocess_traces(sel, dc).inputs);
    const int truth = static_cast<int>(label_of(m));
    auto merged = [](int l) { return l == 3 ? 1 : l; };
    double acc = 0, macc = 0, benign = 0;
    for (int p : pred) {
      acc += p == truth;
      macc += merged(p) == merged(truth);
      benign += p == 0;
    }
    const double n = static_cast<double>(pred.size());
    r.csv += to_string(m) + "," + to_string(label_of(m)) + "," + fmt(acc / n) + "," + fmt(macc / n) + "," +
             fmt(benign / n) + "\n";
    r.rows.push_back({double(static_cast<int>(m)), double(truth), acc / n, macc / n, benign / n});
    labels.push_back(to_string(m));
    s.x.push_back(double(labels.size() - 1));
    s.y.push_back(acc / n);
  }
  r.svg = svg_bar_plot("Unseen attacks", labels, std::span<const PlotSeries>(&s, 1));
  return r;
}

}  // namespace

TableResult run_table(Experiment& ex, TableKind kind, const TableOptions& opt) {
  switch (kind) {
    case TableKind::RnnSweep: return rnn_sweep(ex, opt);
    case TableKind::Accuracy: return accuracy_table(ex);
    case TableKind::Frequency: return frequency_table(ex, opt);
    case TableKind::Location: return location_table(ex);
    case TableKind::Unseen: return unseen_table(ex);
  }
  throw ConfigError("unknown table");
}

std::vector<CamPanel> cam_panels(const Network& model, std::span<const Trace> traces, const DetectorConfig& dc) {
  std::vector<CamPanel> panels;
  for (int c = 0; c < kNumTraceLabels; ++c) {
    const auto it = std::find_if(traces.begin(), traces.end(), [&](const Trace& t) { return static_cast<int>(t.label) == c; });
    if (it == traces.end()) continue;
    CamPanel p;
    p.title = to_string(static_cast<TraceLabel>(c)) + " (" + to_string(it->attack) + ", victim " +
              std::to_string(it->victim_id) + ")";
    p.matrix = preprocess(it->readouts, dc);
    p.cam = grad_cam(model, p.matrix, c);
    panels.push_back(std::move(p));
  }
  return panels;
}

std::string cam_csv(std::span<const CamPanel> panels) {
  std::string out = "class,column,importance\n";
  for (const auto& p : panels)
    for (std::size_t i = 0; i < p.cam.importance.size(); ++i)
      out += to_string(static_cast<TraceLabel>(p.cam.target_class)) + "," + std::to_string(i) + "," +
             fmt(p.cam.importance[i]) + "\n";
  return out;
}

std::vector<std::string> write_corpus(const std::string& dir, std::span<const Trace> traces, const Split& split) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "traces");
  std::vector<std::string> written;
  std::vector<std::string> which(traces.size(), "");
  for (auto i : split.train) which.at(i) = "train";
  for (auto i : split.test) which.at(i) = "test";
  std::string index = "id,file,label,attack,victim,placement,factor,readouts,split\n";
  for (std::size_t i = 0; i < traces.size(); ++i) {
    std::ostringstream name;
    name << "traces/" << std::setw(6) << std::setfill('0') << i << ".sctr";
    const auto path = (fs::path(dir) / name.str()).string();
    save_trace(path, traces[i]);
    written.push_back(path);
    const auto& t = traces[i];
    index += std::to_string(i) + "," + name.str() + "," + to_string(t.label) + "," + to_string(t.attack) + "," +
             std::to_string(t.victim_id) + "," + to_string(t.placement) + "," + std::to_string(t.factor) + "," +
             std::to_string(t.readouts.size()) + "," + which[i] + "\n";
  }
  auto put = [&](const std::string& file, const std::string& body) {
    const auto path = (fs::path(dir) / file).string();
    byteio::write_file(path, body);
    written.push_back(path);
  };
  put("index.csv", index);
  std::string train, test;
  for (auto i : split.train) train += std::to_string(i) + "\n";
  for (auto i : split.test) test += std::to_string(i) + "\n";
  put("train.txt", train);
  put("test.txt", test);
  return written;
}

Corpus read_corpus(const std::string& dir) {
  namespace fs = std::filesystem;
  const auto index_path = (fs::path(dir) / "index.csv").string();
  if (!fs::exists(index_path)) throw DataError("no trace corpus at " + dir + " (index.csv missing)");
  std::istringstream in(byteio::read_file(index_path));
  std::string line;
  std::getline(in, line);
  if (line.rfind("id,file,label", 0) != 0) throw DataError(index_path + ": unexpected header");
  Corpus c;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::istringstream ls(line);
    for (std::string tok; std::getline(ls, tok, ',');) f.push_back(tok);
    if (f.size() != 9) throw DataError(index_path + ": malformed row '" + line + "'");
    const std::size_t id = c.traces.size();
    if (f[0] != std::to_string(id)) throw DataError(index_path + ": ids must be consecutive");
    Trace t = load_trace((fs::path(dir) / f[1]).string());
    if (to_string(t.label) != f[2] || to_string(t.attack) != f[3])
      throw DataError(f[1] + ": trace header disagrees with the index");
    c.traces.push_back(std::move(t));
    if (f[8] == "train") c.split.train.push_back(id);
    else if (f[8] == "test") c.split.test.push_back(id);
  }
  if (c.traces.empty()) throw DataError(index_path + ": empty corpus");
  return c;
}

PipelineSetup pipeline_setup(Experiment& ex, std::uint32_t victim, AttackMethod method, const DetectorConfig& dc) {
  const auto& cfg = ex.config();
  PipelineSetup s;
  s.victim = ex.model_for(victim, method);
  s.pdn = cfg.pdn;
  s.placement = default_profile(cfg.placement);
  s.tdc = cfg.tdc;
  s.calibration = calibrate(cfg.tdc);
  s.frequency_factor = cfg.frequency_factor;
  s.detector_cfg = dc;
  s.detector = ex.detector(dc).model;
  return s;
}

namespace {

template <class MakeOracle>
AvoidanceRun attack_first_flagged(Experiment& ex, AttackMethod method, int max_candidates, const AvoidanceConfig& ac,
                                  const IterateObserver& observe, MakeOracle&& make) {
  const auto& items = ex.items();
  int tried = 0;
  for (auto i : ex.split().test) {
    if (items[i].method != method) continue;
    if (tried++ >= max_candidates) break;
    const auto oracle = make(items[i]);
    try {
      return {items[i], run_avoidance(*oracle, items[i].image, ac, observe)};
    } catch (const ExperimentError&) {
      // Already benign to this detector; not a valid starting point.
    }
  }
  throw ExperimentError("no " + to_string(method) + " test input among " + std::to_string(tried) +
                        " candidates is flagged by the detector");
}

}  // namespace

AvoidanceRun avoid_pipeline(Experiment& ex, const DetectorConfig& dc, const AvoidanceConfig& ac, AttackMethod method,
                            int max_candidates, const IterateObserver& observe) {
  return attack_first_flagged(ex, method, max_candidates, ac, observe, [&](const InputItem& item) {
    return std::make_unique<PipelineOracle>(pipeline_setup(ex, item.victim, method, dc));
  });
}

AvoidanceRun avoid_surrogate(Experiment& ex, const AvoidanceConfig& ac, AttackMethod method, int max_candidates,
                             const IterateObserver& observe) {
  const auto& items = ex.items();
  const auto& train_idx = ex.split().train;
  const auto n = static_cast<int>(train_idx.size());
  Tensor x({n, 1, 28, 28});
  std::vector<int> labels;
  for (int r = 0; r < n; ++r) {
    const auto& it = items[train_idx[static_cast<std::size_t>(r)]];
    std::copy(it.image.begin(), it.image.end(), x.storage().begin() + static_cast<long>(r) * 784);
    labels.push_back(static_cast<int>(label_of(it.method)));
  }
  const std::uint64_t seed = derive(ex.config().seed, kSurrogate);
  Network surrogate = Network::create({LayerSpec::fully_connected(64), LayerSpec::relu(), LayerSpec::fully_connected(4),
                                       LayerSpec::softmax()},
                                      kVictimInputShape, seed);
  TrainOptions opts;
  opts.epochs = 20;
  opts.lr = 1e-3;
  opts.seed = seed;
  opts.class_balanced = true;
  opts.num_classes = kNumTraceLabels;
  train(surrogate, Dataset{x, labels}, opts);
  return attack_first_flagged(ex, method, max_candidates, ac, observe, [&](const InputItem& item) {
    return std::make_unique<SurrogateOracle>(surrogate, ex.model_for(item.victim, method).net);
  });
}

}  // namespace scdet
