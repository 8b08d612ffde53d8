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
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "scdet/attacks.hpp"
#include "scdet/avoidance.hpp"
#include "scdet/detector.hpp"
#include "scdet/leakage.hpp"
#include "scdet/tdc.hpp"
#include "scdet/victim.hpp"

namespace scdet {

// Everything a recipe needs, loaded from an INI file whose sections mirror the
// module configs: [recipe], [victim], [pdn], [tdc], [attacks], [detector],
// [avoidance]. Missing keys keep their defaults.
struct HarnessConfig {
  std::string name = "desk";
  int victims = 40;
  int traces_per_class = 500;
  std::vector<AttackMethod> roster{AttackMethod::FGSM,           AttackMethod::PGD,
                                   AttackMethod::CW,             AttackMethod::PatternTrigger,
                                   AttackMethod::InstanceTrigger, AttackMethod::Watermark,
                                   AttackMethod::FashionSurrogate, AttackMethod::Cifar10Surrogate,
                                   AttackMethod::JBDA};
  std::vector<AttackMethod> unseen{AttackMethod::DeepFool, AttackMethod::SquareTrigger,
                                   AttackMethod::Cifar100Surrogate};
  bool include_benign = true;
  int unseen_traces = 100;          // per unseen method
  std::size_t train_images = 1000;  // victim training set
  std::size_t pool_images = 2000;   // per query family
  double poison_rate = 0.1;
  int backdoor_target = 0;
  Placement placement = Placement::Baseline;
  int frequency_factor = 1;
  int sweep_epochs = 20;  // epochs for every table except `accuracy`
  double augment_fraction = 0.1;
  std::uint64_t seed = 1;

  VictimMenu menu;
  VictimRecipe victim;
  ScheduleConfig schedule;
  PDNParams pdn;
  TDCConfig tdc;
  AdversarialParams adversarial;
  ExtractionParams extraction;
  DetectorConfig detector;
  AvoidanceConfig avoidance;

  void validate() const;
};

HarnessConfig parse_config(const std::string& text);
HarnessConfig load_config(const std::string& path);
// Canonical text form; parse_config(config_text(c)) reproduces c.
std::string config_text(const HarnessConfig& c);
// Victim count and corpus size used for long runs.
HarnessConfig full_scale(HarnessConfig c);

std::string sha1_hex(std::string_view data);

// One attack (or benign) input bound to the victim model that runs it.
struct InputItem {
  std::uint32_t victim = 0;
  AttackMethod method = AttackMethod::None;
  std::vector<float> image;  // 28x28 in [0, 1]
};

struct Split {
  std::vector<std::size_t> train, test;
};

// 90/10 split drawn per label, so each class keeps its proportion.
Split split_by_label(std::span<const int> labels, std::uint64_t seed, double train_fraction = 0.9);

struct StageTiming {
  std::string stage;
  double seconds = 0;
};

// Lazily builds and caches victims, attack inputs, rendered traces and trained
// detectors for one config. Every product depends only on the config.
class Experiment {
 public:
  explicit Experiment(HarnessConfig cfg);
  ~Experiment();
  Experiment(const Experiment&) = delete;
  Experiment& operator=(const Experiment&) = delete;

  const HarnessConfig& config() const { return cfg_; }
  const std::vector<TrainedVictim>& victims();
  const Dataset& eval_images();
  // The model that runs an item: the clean victim, or its backdoored twin for trigger attacks.
  const QuantizedNetwork& model_for(std::uint32_t victim, AttackMethod method);

  const std::vector<InputItem>& items();         // benign + roster
  const std::vector<InputItem>& unseen_items();  // held-out methods
  const Split& split();

  std::vector<Trace> render(std::span<const InputItem> items, Placement placement, int factor,
                            std::uint64_t stream);
  const std::vector<Trace>& traces();  // items() at the configured placement and factor
  Trace render_one(const InputItem& item, Placement placement, int factor, std::uint64_t noise_seed);

  const DetectorTraining& detector(const DetectorConfig& dc);  // trained on traces() train split

  const std::vector<StageTiming>& timings() const { return timings_; }

 private:
  struct Impl;
  Tensor make_group(std::uint32_t victim, AttackMethod method, std::size_t count, std::uint64_t stream);
  std::vector<InputItem> build_items(const std::vector<std::pair<std::uint32_t, AttackMethod>>& plan,
                                     std::uint64_t stream);

  HarnessConfig cfg_;
  std::unique_ptr<Impl> impl_;
  std::vector<StageTiming> timings_;
};

// Detector config for a frequency factor and averaging window; the column
// count keeps the covered stretch of the trace constant.
DetectorConfig frequency_detector(const DetectorConfig& base, int factor, int window);

enum class TableKind { RnnSweep, Accuracy, Frequency, Location, Unseen };
std::string to_string(TableKind k);
TableKind parse_table(const std::string& s);

struct TableResult {
  std::string name;
  std::string csv;
  std::string svg;
  std::vector<std::vector<double>> rows;  // numeric view of the CSV body
};

// Grid for the sweeping tables; the defaults are the full grids.
struct TableOptions {
  std::vector<int> rnn_layers{1, 2, 3, 4, 5, 6};
  std::vector<int> hidden{128, 256};
  std::vector<int> factors{1, 2, 3, 4, 5};
  std::vector<int> windows{50, 10};
};

TableResult run_table(Experiment& ex, TableKind kind, const TableOptions& opt = {});

// Minimal SVG plotting.
struct PlotSeries {
  std::string label;
  std::vector<double> x, y;
};
std::string svg_line_plot(const std::string& title, const std::string& x_label, const std::string& y_label,
                          std::span<const PlotSeries> series);
std::string svg_bar_plot(const std::string& title, std::span<const std::string> labels,
                         std::span<const PlotSeries> series);

struct CamPanel {
  std::string title;
  Tensor matrix;  // [rows, cols] detector input
  CamMap cam;
};
std::vector<CamPanel> cam_panels(const Network& model, std::span<const Trace> traces, const DetectorConfig& dc);
std::string cam_svg(std::span<const CamPanel> panels);
std::string cam_csv(std::span<const CamPanel> panels);

// Files and manifest.
struct CorpusIndexRow {
  std::size_t id = 0;
  std::string file;
  Trace meta;  // readouts left empty
  std::string split;
};

// Writes traces/NNNNNN.sctr, index.csv, train.txt and test.txt under dir; returns the written paths.
std::vector<std::string> write_corpus(const std::string& dir, std::span<const Trace> traces, const Split& split);
struct Corpus {
  std::vector<Trace> traces;
  Split split;
};
Corpus read_corpus(const std::string& dir);

struct Manifest {
  std::string recipe;
  std::string config;  // canonical config text; omitted when empty
  std::string config_sha1;
  std::uint64_t seed = 0;
  std::vector<StageTiming> timings;
  std::vector<std::string> outputs;
};
// JSON with a plain SHA-1 and a git blob digest per output file.
std::string manifest_json(const Manifest& m);

// Pipeline oracle around one victim model and a trained detector.
PipelineSetup pipeline_setup(Experiment& ex, std::uint32_t victim, AttackMethod method, const DetectorConfig& dc);

struct AvoidanceRun {
  InputItem item;
  AvoidanceResult result;
};
// Attacks the first test-split item of `method` the detector flags; throws
// ExperimentError if no candidate among `max_candidates` is flagged.
AvoidanceRun avoid_pipeline(Experiment& ex, const DetectorConfig& dc, const AvoidanceConfig& ac, AttackMethod method,
                            int max_candidates = 20, const IterateObserver& observe = {});
// Same attack against an image-domain detector trained on the item labels.
AvoidanceRun avoid_surrogate(Experiment& ex, const AvoidanceConfig& ac, AttackMethod method, int max_candidates = 20,
                             const IterateObserver& observe = {});

}  // namespace scdet
