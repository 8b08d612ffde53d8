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

#include "scdet/detector.hpp"

#include <algorithm>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "scdet/checkpoint.hpp"

namespace scdet {

void DetectorConfig::validate() const {
  if (window < 1) throw ConfigError("detector window must be >= 1");
  if (rows < 1 || trace_len < rows || trace_len % rows != 0)
    throw ConfigError("detector trace_len must be a positive multiple of rows");
  if (rnn_layers < 1) throw ConfigError("detector needs at least one BGRU layer");
  if (hidden < 1 || conv_channels < 1 || conv_kernel < 1) throw ConfigError("detector layer sizes must be positive");
  if (conv_kernel > columns()) throw ConfigError("detector conv kernel exceeds the row length");
  if (!(dropout >= 0 && dropout < 1)) throw ConfigError("detector dropout must lie in [0, 1)");
  if (epochs < 0 || batch < 1) throw ConfigError("detector epochs must be >= 0 and batch >= 1");
  if (lr < 0) throw ConfigError("detector learning rate must be nonnegative");
}

std::string to_text(const DetectorConfig& c) {
  std::ostringstream os;
  os << std::setprecision(17) << "[detector]\n"
     << "window=" << c.window << "\nrows=" << c.rows << "\ntrace_len=" << c.trace_len << "\nrnn_layers=" << c.rnn_layers
     << "\nhidden=" << c.hidden << "\nconv_channels=" << c.conv_channels << "\nconv_kernel=" << c.conv_kernel
     << "\ndropout=" << c.dropout << "\nepochs=" << c.epochs << "\nlr=" << c.lr << "\nbatch=" << c.batch
     << "\nseed=" << c.seed << "\n";
  return os.str();
}

DetectorConfig parse_detector_config(const std::string& text) {
  boost::property_tree::ptree pt;
  std::istringstream is(text);
  try {
    boost::property_tree::read_ini(is, pt);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(std::string("detector config: ") + e.what());
  }
  DetectorConfig c;
  const auto& d = pt.get_child("detector", boost::property_tree::ptree{});
  try {
    c.window = d.get("window", c.window);
    c.rows = d.get("rows", c.rows);
    c.trace_len = d.get("trace_len", c.trace_len);
    c.rnn_layers = d.get("rnn_layers", c.rnn_layers);
    c.hidden = d.get("hidden", c.hidden);
    c.conv_channels = d.get("conv_channels", c.conv_channels);
    c.conv_kernel = d.get("conv_kernel", c.conv_kernel);
    c.dropout = d.get("dropout", c.dropout);
    c.epochs = d.get("epochs", c.epochs);
    c.lr = d.get("lr", c.lr);
    c.batch = d.get("batch", c.batch);
    c.seed = d.get("seed", c.seed);
  } catch (const boost::property_tree::ptree_error& e) {
    throw ConfigError(std::string("detector config: ") + e.what());
  }
  c.validate();
  return c;
}

Tensor preprocess(std::span<const std::uint32_t> readouts, const DetectorConfig& cfg) {
  cfg.validate();
  if (readouts.empty()) throw DataError("cannot preprocess an empty trace");
  const auto w = static_cast<std::size_t>(cfg.window);
  std::vector<double> avg((readouts.size() + w - 1) / w);
  for (std::size_t b = 0; b < avg.size(); ++b) {
    const std::size_t lo = b * w, hi = std::min(readouts.size(), lo + w);
    double s = 0;
    for (std::size_t i = lo; i < hi; ++i) s += readouts[i];
    avg[b] = s / static_cast<double>(hi - lo);
  }
  const auto [mn, mx] = std::minmax_element(avg.begin(), avg.end());
  const double lo = *mn, span = *mx - *mn;
  for (auto& v : avg) v = span > 0 ? (v - lo) / span : 0.5;
  const auto len = static_cast<std::size_t>(cfg.trace_len);
  std::vector<float> out(len, 0.f);
  if (avg.size() >= len) {
    const std::size_t start = (avg.size() - len) / 2;
    for (std::size_t i = 0; i < len; ++i) out[i] = static_cast<float>(avg[start + i]);
  } else {
    const std::size_t pad = (len - avg.size()) / 2;
    for (std::size_t i = 0; i < avg.size(); ++i) out[pad + i] = static_cast<float>(avg[i]);
  }
  return Tensor(cfg.input_shape(), std::move(out));
}

Dataset preprocess_traces(std::span<const Trace> traces, const DetectorConfig& cfg) {
  if (traces.empty()) throw DataError("no traces to preprocess");
  std::vector<Tensor> rows;
  std::vector<int> labels;
  rows.reserve(traces.size());
  for (const auto& t : traces) {
    rows.push_back(preprocess(t.readouts, cfg));
    labels.push_back(static_cast<int>(t.label));
  }
  return Dataset{stack<float>(rows), std::move(labels)};
}

std::vector<LayerSpec> detector_layers(const DetectorConfig& cfg) {
  cfg.validate();
  std::vector<LayerSpec> layers{LayerSpec::conv1d(cfg.conv_kernel, cfg.conv_channels),
                                LayerSpec::fully_connected(cfg.hidden, true)};
  for (int i = 0; i < cfg.rnn_layers; ++i) layers.push_back(LayerSpec::bgru(cfg.hidden));
  layers.push_back(LayerSpec::temporal_mean());
  layers.push_back(LayerSpec::gelu());
  layers.push_back(LayerSpec::dropout(static_cast<float>(cfg.dropout)));
  layers.push_back(LayerSpec::fully_connected(kNumTraceLabels));
  layers.push_back(LayerSpec::softmax());
  return layers;
}

Network build_detector(const DetectorConfig& cfg) { return Network::create(detector_layers(cfg), cfg.input_shape(), cfg.seed); }

DetectorTraining train_detector(const Dataset& train_set, const DetectorConfig& cfg) {
  cfg.validate();
  if (train_set.size() == 0) throw DataError("detector training set is empty");
  if (train_set.sample_shape() != cfg.input_shape())
    throw ShapeError("detector input must be " + shape_string(cfg.input_shape()) + ", got " +
                     shape_string(train_set.sample_shape()));
  DetectorTraining out{build_detector(cfg), {}};
  TrainOptions opts;
  opts.epochs = cfg.epochs;
  opts.lr = cfg.lr;
  opts.batch = cfg.batch;
  opts.seed = cfg.seed;
  opts.class_balanced = true;
  opts.num_classes = kNumTraceLabels;
  out.curve = train(out.model, train_set, opts);
  return out;
}

DetectionReport score_predictions(std::span<const int> truth, std::span<const int> predicted) {
  if (truth.empty()) throw DataError("cannot evaluate an empty test set");
  if (truth.size() != predicted.size()) throw ShapeError("prediction count does not match labels");
  DetectionReport r;
  r.count = truth.size();
  std::size_t correct = 0, merged = 0;
  auto pooled = [](int c) { return c == 3 ? 1 : c; };
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const int t = truth[i], p = predicted[i];
    if (t < 0 || t >= kNumTraceLabels || p < 0 || p >= kNumTraceLabels) throw DataError("label out of range");
    ++r.confusion[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)];
    correct += t == p;
    merged += pooled(t) == pooled(p);
  }
  for (std::size_t c = 0; c < kNumTraceLabels; ++c) {
    std::size_t n = 0;
    for (auto v : r.confusion[c]) n += v;
    r.per_class_acc[c] = n ? static_cast<double>(r.confusion[c][c]) / static_cast<double>(n) : 0.0;
    if (c == 0) r.fpr = n ? static_cast<double>(n - r.confusion[0][0]) / static_cast<double>(n) : 0.0;
  }
  r.total_acc = static_cast<double>(correct) / static_cast<double>(r.count);
  r.merged_acc = static_cast<double>(merged) / static_cast<double>(r.count);
  return r;
}

DetectionReport evaluate(const Network& model, const Dataset& test_set) {
  if (test_set.size() == 0) throw DataError("cannot evaluate an empty test set");
  const auto pred = predict_labels(model, test_set.inputs);
  return score_predictions(test_set.labels, pred);
}

std::string report_csv(const DetectionReport& r) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4) << "metric,value\n";
  for (int c = 0; c < kNumTraceLabels; ++c)
    os << "acc_" << to_string(static_cast<TraceLabel>(c)) << ',' << r.per_class_acc[static_cast<std::size_t>(c)] << '\n';
  os << "total," << r.total_acc << "\nmerged," << r.merged_acc << "\nfpr," << r.fpr << "\ncount," << r.count << '\n';
  for (int t = 0; t < kNumTraceLabels; ++t)
    for (int p = 0; p < kNumTraceLabels; ++p)
      os << "confusion_" << t << '_' << p << ',' << r.confusion[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)]
         << '\n';
  return os.str();
}

std::string report_text(const DetectionReport& r) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(1);
  os << "class         accuracy\n";
  for (int c = 0; c < kNumTraceLabels; ++c)
    os << std::left << std::setw(14) << to_string(static_cast<TraceLabel>(c)) << std::right << std::setw(7)
       << 100 * r.per_class_acc[static_cast<std::size_t>(c)] << "%\n";
  os << std::left << std::setw(14) << "total" << std::right << std::setw(7) << 100 * r.total_acc << "%\n"
     << std::left << std::setw(14) << "merged" << std::right << std::setw(7) << 100 * r.merged_acc << "%\n"
     << std::left << std::setw(14) << "fpr" << std::right << std::setw(7) << 100 * r.fpr << "%\n\n"
     << "confusion (rows = truth, cols = predicted)\n";
  for (const auto& row : r.confusion) {
    for (auto v : row) os << std::setw(7) << v;
    os << '\n';
  }
  os << "\nreference accuracy: total " << 100 * kReferenceTotalAccuracy << "%, merged "
     << 100 * kReferenceMergedAccuracy << "% (n=" << r.count << ")\n";
  return os.str();
}

CamMap grad_cam(const Network& model, const Tensor& matrix, int target_class, std::size_t layer) {
  if (layer >= model.layers.size()) throw ConfigError("Grad-CAM layer index out of range");
  const Shape in = model.input_shape;
  if (numel(in) != matrix.size() || in.size() != 2) throw ShapeError("Grad-CAM expects one [rows, cols] matrix");
  Shape batch{1};
  batch.insert(batch.end(), in.begin(), in.end());
  Tape tape;
  const Tensor logits = forward_logits(model, matrix.reshaped(batch), {}, &tape);
  if (target_class < 0 || target_class >= logits.dim(1)) throw ConfigError("Grad-CAM target class out of range");
  Tensor dz(logits.shape());
  dz[static_cast<std::size_t>(target_class)] = 1.f;
  const auto g = backward(model, tape, dz, true);
  const Tensor& act = tape.caches[layer].output;
  const Tensor& grad = g.activations[layer];
  if (act.rank() != 3) throw ConfigError("Grad-CAM layer must produce [channels, length] maps");
  const int channels = act.dim(1), len = act.dim(2);
  std::vector<double> cam(static_cast<std::size_t>(len), 0.0);
  for (int k = 0; k < channels; ++k) {
    double w = 0;
    for (int t = 0; t < len; ++t) w += grad[static_cast<std::size_t>(k * len + t)];
    w /= len;
    for (int t = 0; t < len; ++t) cam[static_cast<std::size_t>(t)] += w * act[static_cast<std::size_t>(k * len + t)];
  }
  for (auto& v : cam) v = std::max(0.0, v);
  // Map back onto input columns: a valid convolution output t is centred on
  // input column t + (cols - len) / 2; edges replicate, other lengths resample linearly.
  const int cols = in[1];
  CamMap out{std::vector<double>(static_cast<std::size_t>(cols)), target_class, false};
  const double offset = len <= cols ? (cols - len) / 2.0 : 0.0;
  const double stretch = len <= cols ? 1.0 : (len - 1.0) / std::max(1, cols - 1);
  for (int c = 0; c < cols; ++c) {
    const double pos = std::clamp((c - offset) * stretch, 0.0, len - 1.0);
    const int i0 = static_cast<int>(std::floor(pos));
    const int i1 = std::min(i0 + 1, len - 1);
    const double f = pos - i0;
    out.importance[static_cast<std::size_t>(c)] =
        (1 - f) * cam[static_cast<std::size_t>(i0)] + f * cam[static_cast<std::size_t>(i1)];
  }
  const double mx = *std::max_element(out.importance.begin(), out.importance.end());
  if (mx > 0) {
    for (auto& v : out.importance) v /= mx;
  } else {
    std::fill(out.importance.begin(), out.importance.end(), 0.0);
    out.all_zero = true;
  }
  return out;
}

void save_detector(const std::string& path, const Network& model, const DetectorConfig& cfg) {
  save_checkpoint(path, model, to_text(cfg));
}

Network load_detector(const std::string& path, DetectorConfig* cfg) {
  std::string meta;
  Network net = load_checkpoint(path, &meta);
  const DetectorConfig parsed = parse_detector_config(meta);
  if (net.layers != detector_layers(parsed) || net.input_shape != parsed.input_shape())
    throw DataError(path + ": checkpoint layers do not match its detector config");
  if (cfg) *cfg = parsed;
  return net;
}

}  // namespace scdet
