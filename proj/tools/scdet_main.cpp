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

// scdet: command-line front end for the detection pipeline.
//
// Exit codes: 0 success, 2 bad configuration or arguments, 3 bad or missing
// data, 4 experiment failure.

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "scdet/checkpoint.hpp"
#include "scdet/error.hpp"
#include "scdet/harness.hpp"

namespace fs = std::filesystem;
using namespace scdet;

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  bool full_scale = false;
};

HarnessConfig load(const Globals& g) {
  HarnessConfig c = g.config.empty() ? HarnessConfig{} : load_config(g.config);
  if (g.seed) c.seed = *g.seed;
  if (g.full_scale) c = full_scale(c);
  c.validate();
  return c;
}

void write_file(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream f(p, std::ios::binary);
  if (!f) throw DataError("cannot write " + p.string());
  f << text;
}

class Run {
 public:
  Run(const Globals& g, std::string command) : g_(g), command_(std::move(command)) {}

  template <class F>
  auto stage(const std::string& name, F&& f) {
    auto t0 = std::chrono::steady_clock::now();
    if constexpr (std::is_void_v<decltype(f())>) {
      f();
      note(name, t0);
    } else {
      auto r = f();
      note(name, t0);
      return r;
    }
  }

  fs::path out(const std::string& rel) {
    fs::path p = fs::path(g_.out) / rel;
    outputs_.push_back(p.string());
    return p;
  }
  void add_outputs(const std::vector<std::string>& paths) { outputs_.insert(outputs_.end(), paths.begin(), paths.end()); }

  void finish(const HarnessConfig& c, const std::vector<StageTiming>& extra = {}) {
    Manifest m;
    m.recipe = command_ + " (" + c.name + ")";
    m.config = config_text(c);
    m.config_sha1 = sha1_hex(m.config);
    m.seed = c.seed;
    m.timings = extra;
    m.timings.insert(m.timings.end(), timings_.begin(), timings_.end());
    m.outputs = outputs_;
    write_file(fs::path(g_.out) / (command_ + ".manifest.json"), manifest_json(m));
  }

 private:
  void note(const std::string& name, std::chrono::steady_clock::time_point t0) {
    double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    timings_.push_back({name, s});
    std::cerr << name << ": " << s << " s\n";
  }

  const Globals& g_;
  std::string command_;
  std::vector<StageTiming> timings_;
  std::vector<std::string> outputs_;
};

Dataset split_set(const Corpus& corpus, const std::vector<std::size_t>& idx, const DetectorConfig& dc) {
  std::vector<Trace> picked;
  picked.reserve(idx.size());
  for (std::size_t i : idx) picked.push_back(corpus.traces[i]);
  return preprocess_traces(picked, dc);
}

void cmd_gen_victims(const Globals& g) {
  HarnessConfig c = load(g);
  Run run(g, "gen-victims");
  Experiment ex(c);
  const auto& victims = ex.victims();
  std::ostringstream csv;
  csv << "id,seed,depth,train_accuracy,flagged,regenerations,file,layers\n";
  for (std::size_t i = 0; i < victims.size(); ++i) {
    const auto& v = victims[i];
    char name[32];
    std::snprintf(name, sizeof name, "victims/v%04zu.scnn", i);
    save_checkpoint(run.out(name).string(), v.model.net, describe(v.spec));
    csv << i << ',' << v.spec.seed << ',' << v.spec.depth << ',' << v.train_accuracy << ',' << (v.flagged ? 1 : 0)
        << ',' << v.regenerations << ',' << name << ",\"" << describe(v.spec) << "\"\n";
  }
  write_file(run.out("victims.csv"), csv.str());
  std::cout << victims.size() << " victims written to " << g.out << "/victims\n";
  run.finish(c, ex.timings());
}

void cmd_build_dataset(const Globals& g) {
  HarnessConfig c = load(g);
  Run run(g, "build-dataset");
  Experiment ex(c);
  const auto& traces = ex.traces();
  auto written = run.stage("write corpus", [&] { return write_corpus((fs::path(g.out) / "corpus").string(), traces, ex.split()); });
  run.add_outputs(written);
  std::cout << traces.size() << " traces (" << ex.split().train.size() << " train, " << ex.split().test.size()
            << " test) written to " << g.out << "/corpus\n";
  run.finish(c, ex.timings());
}

void cmd_train_detector(const Globals& g, const std::string& data) {
  HarnessConfig c = load(g);
  Run run(g, "train-detector");
  Corpus corpus = run.stage("read corpus", [&] { return read_corpus(data); });
  Dataset train = run.stage("preprocess", [&] { return split_set(corpus, corpus.split.train, c.detector); });
  DetectorTraining t = run.stage("train", [&] { return train_detector(train, c.detector); });
  save_detector(run.out("detector.scnn").string(), t.model, c.detector);
  std::ostringstream csv;
  csv << "epoch,loss,accuracy\n";
  for (std::size_t e = 0; e < t.curve.size(); ++e) csv << e << ',' << t.curve[e].loss << ',' << t.curve[e].accuracy << '\n';
  write_file(run.out("train_curve.csv"), csv.str());
  if (!t.curve.empty())
    std::cout << "final train loss " << t.curve.back().loss << ", accuracy " << t.curve.back().accuracy << '\n';
  run.finish(c);
}

void cmd_eval(const Globals& g, const std::string& data, const std::string& model_path) {
  HarnessConfig c = load(g);
  Run run(g, "eval");
  DetectorConfig dc;
  Network model = load_detector(model_path, &dc);
  Corpus corpus = run.stage("read corpus", [&] { return read_corpus(data); });
  Dataset test = run.stage("preprocess", [&] { return split_set(corpus, corpus.split.test, dc); });
  DetectionReport r = run.stage("evaluate", [&] { return evaluate(model, test); });
  write_file(run.out("eval.csv"), report_csv(r));
  std::cout << report_text(r);
  run.finish(c);
}

void cmd_table(const Globals& g, const std::string& name, const TableOptions& opt) {
  HarnessConfig c = load(g);
  TableKind kind = parse_table(name);
  Run run(g, "table-" + name);
  Experiment ex(c);
  TableResult t = run_table(ex, kind, opt);
  write_file(run.out(t.name + ".csv"), t.csv);
  if (!t.svg.empty()) write_file(run.out(t.name + ".svg"), t.svg);
  std::cout << t.csv;
  run.finish(c, ex.timings());
}

void cmd_cam(const Globals& g, const std::string& data, const std::string& model_path) {
  HarnessConfig c = load(g);
  Run run(g, "cam");
  DetectorConfig dc;
  Network model = load_detector(model_path, &dc);
  Corpus corpus = run.stage("read corpus", [&] { return read_corpus(data); });
  std::vector<Trace> test;
  for (std::size_t i : corpus.split.test) test.push_back(corpus.traces[i]);
  auto panels = run.stage("grad-cam", [&] { return cam_panels(model, test, dc); });
  write_file(run.out("cam.svg"), cam_svg(panels));
  write_file(run.out("cam.csv"), cam_csv(panels));
  for (const auto& p : panels) std::cout << p.title << (p.cam.all_zero ? " (all-zero CAM)" : "") << '\n';
  run.finish(c);
}

void cmd_avoid(const Globals& g, const std::string& method_name, bool surrogate, int candidates) {
  HarnessConfig c = load(g);
  AttackMethod method = parse_attack_method(method_name);
  Run run(g, surrogate ? "avoid-surrogate" : "avoid");
  Experiment ex(c);
  AvoidanceRun r = run.stage("avoidance", [&] {
    return surrogate ? avoid_surrogate(ex, c.avoidance, method, candidates)
                     : avoid_pipeline(ex, c.detector, c.avoidance, method, candidates);
  });
  write_file(run.out(surrogate ? "avoid_surrogate.csv" : "avoid.csv"), curve_csv(r.result));
  const auto& last = r.result.curve.back();
  std::cout << "victim " << r.item.victim << ", " << to_string(method) << ": benign rate "
            << r.result.curve.front().benign_rate << " -> " << last.benign_rate << " after " << last.iteration
            << " iterations, " << r.result.state.queries_used << " queries; victim label kept "
            << last.victim_label_preserved_rate << '\n';
  run.finish(c, ex.timings());
}

void cmd_calibrate(const Globals& g) {
  HarnessConfig c = load(g);
  CalibrationResult r = calibrate(c.tdc);
  std::cout << "coarse_len " << r.coarse_len << "\nfine_len " << r.fine_len << "\nnominal_readout "
            << r.nominal_readout << '\n';
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const CalibrationFailed*>(&e)) return 2;
  if (dynamic_cast<const DataError*>(&e) || dynamic_cast<const ShapeError*>(&e)) return 3;
  return 4;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Power side-channel attack detector for ML accelerators"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "INI recipe file")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Override the recipe seed");
  app.add_option("--out", g.out, "Output directory")->capture_default_str();
  app.add_flag("--paper-scale", g.full_scale, "Use the full victim count and corpus size");
  app.fallthrough();

  std::string data, model, table_name, method = "fgsm";
  bool surrogate = false;
  int candidates = 20;
  TableOptions topt;

  auto* gen = app.add_subcommand("gen-victims", "Generate, train and quantize victim models");
  auto* build = app.add_subcommand("build-dataset", "Render the labelled trace corpus");
  auto* train = app.add_subcommand("train-detector", "Train the detector on a corpus");
  train->add_option("--data", data, "Corpus directory")->required();
  auto* ev = app.add_subcommand("eval", "Score a detector on the corpus test split");
  ev->add_option("--data", data, "Corpus directory")->required();
  ev->add_option("--model", model, "Detector checkpoint")->required();
  auto* table = app.add_subcommand("table", "Regenerate one result table");
  table->add_option("name", table_name, "rnn_sweep | accuracy | frequency | location | unseen")->required();
  table->add_option("--layers", topt.rnn_layers, "RNN depths for rnn_sweep")->delimiter(',');
  table->add_option("--hidden", topt.hidden, "Hidden sizes for rnn_sweep")->delimiter(',');
  table->add_option("--factors", topt.factors, "Frequency factors")->delimiter(',');
  table->add_option("--windows", topt.windows, "Averaging windows")->delimiter(',');
  auto* cam = app.add_subcommand("cam", "Grad-CAM panels for one test trace per class");
  cam->add_option("--data", data, "Corpus directory")->required();
  cam->add_option("--model", model, "Detector checkpoint")->required();
  auto* avoid = app.add_subcommand("avoid", "Run the detection-avoidance attack");
  avoid->add_option("--method", method, "Attack whose input is perturbed")->capture_default_str();
  avoid->add_flag("--surrogate", surrogate, "Attack an image-domain surrogate detector");
  avoid->add_option("--candidates", candidates, "Test items tried before giving up")->capture_default_str();
  auto* cal = app.add_subcommand("calibrate-tdc", "Print the TDC delay-line calibration");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*gen) cmd_gen_victims(g);
    else if (*build) cmd_build_dataset(g);
    else if (*train) cmd_train_detector(g, data);
    else if (*ev) cmd_eval(g, data, model);
    else if (*table) cmd_table(g, table_name, topt);
    else if (*cam) cmd_cam(g, data, model);
    else if (*avoid) cmd_avoid(g, method, surrogate, candidates);
    else if (*cal) cmd_calibrate(g);
  } catch (const std::exception& e) {
    std::cerr << "scdet: " << e.what() << '\n';
    return exit_code_for(e);
  }
  return 0;
}
