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

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "scdet/tdc.hpp"
#include "scdet/training.hpp"

namespace scdet {

struct DetectorConfig {
  int window = 10;      // readouts averaged per preprocessed value
  int rows = 3;
  int trace_len = 768;  // values kept after averaging
  int rnn_layers = 5;   // N
  int hidden = 128;     // D
  int conv_channels = 16;
  int conv_kernel = 7;
  double dropout = 0.3;
  int epochs = 100;
  double lr = 1e-3;
  int batch = 32;
  std::uint64_t seed = 0;

  void validate() const;
  int columns() const { return trace_len / rows; }
  Shape input_shape() const { return {rows, columns()}; }
};

std::string to_text(const DetectorConfig& cfg);
DetectorConfig parse_detector_config(const std::string& text);

// Block-average, min-max normalize, center crop or pad to trace_len, and
// reshape to [rows, trace_len / rows].
Tensor preprocess(std::span<const std::uint32_t> readouts, const DetectorConfig& cfg);
Dataset preprocess_traces(std::span<const Trace> traces, const DetectorConfig& cfg);

std::vector<LayerSpec> detector_layers(const DetectorConfig& cfg);
Network build_detector(const DetectorConfig& cfg);

struct DetectorTraining {
  Network model;
  std::vector<EpochStats> curve;
};

DetectorTraining train_detector(const Dataset& train_set, const DetectorConfig& cfg);

inline constexpr double kReferenceTotalAccuracy = 0.879;
inline constexpr double kReferenceMergedAccuracy = 0.940;

struct DetectionReport {
  std::array<double, kNumTraceLabels> per_class_acc{};
  double total_acc = 0;
  double merged_acc = 0;  // adversarial and extraction scored as one class
  double fpr = 0;         // benign traces flagged as any attack
  std::array<std::array<std::size_t, kNumTraceLabels>, kNumTraceLabels> confusion{};  // [truth][predicted]
  std::size_t count = 0;
};

DetectionReport score_predictions(std::span<const int> truth, std::span<const int> predicted);
DetectionReport evaluate(const Network& model, const Dataset& test_set);
std::string report_csv(const DetectionReport& r);
std::string report_text(const DetectionReport& r);

struct CamMap {
  std::vector<double> importance;  // one value per input column, max-normalized
  int target_class = 0;
  bool all_zero = false;
};

// Grad-CAM over the output of `layer` (the Conv1D layer by default).
CamMap grad_cam(const Network& model, const Tensor& matrix, int target_class, std::size_t layer = 0);

void save_detector(const std::string& path, const Network& model, const DetectorConfig& cfg);
Network load_detector(const std::string& path, DetectorConfig* cfg = nullptr);

}  // namespace scdet
