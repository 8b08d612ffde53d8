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
#include <optional>
#include <string>
#include <vector>

#include "scdet/tensor.hpp"

namespace scdet {

enum class LayerKind : std::uint8_t {
  Conv2D = 0,
  MaxPool2D = 1,
  FullyConnected = 2,
  ReLU = 3,
  GELU = 4,
  Softmax = 5,
  BGRU = 6,
  Dropout = 7,
  Conv1D = 8,
  TemporalMean = 9,
};

std::string to_string(LayerKind kind);

struct LayerSpec;
// Output shape (without batch axis) of `layer` applied to `input`; throws
// ShapeError when incompatible.
Shape infer_output_shape(const LayerSpec& layer, const Shape& input);

// One layer of a sequential network. Only the fields relevant to `kind` are
// meaningful; the named constructors fill them.
struct LayerSpec {
  LayerKind kind = LayerKind::ReLU;
  int kernel = 0;    // Conv1D / Conv2D / MaxPool2D (pool stride == kernel)
  int channels = 0;  // Conv1D / Conv2D output channels
  int units = 0;     // FullyConnected output size
  int hidden = 0;    // BGRU hidden size per direction
  float rate = 0.f;  // Dropout drop probability
  // FullyConnected only: act on the last axis and keep the leading ones
  // instead of flattening every non-batch axis.
  bool per_position = false;

  static LayerSpec conv2d(int kernel, int out_channels);
  static LayerSpec conv1d(int kernel, int out_channels);
  static LayerSpec max_pool(int kernel);
  static LayerSpec fully_connected(int units, bool per_position = false);
  static LayerSpec relu();
  static LayerSpec gelu();
  static LayerSpec softmax();
  static LayerSpec bgru(int hidden);
  static LayerSpec dropout(float rate);
  static LayerSpec temporal_mean();

  bool has_parameters() const;
  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

// Sequential network: layer list plus one parameter tensor list per layer.
// Shapes exclude the batch axis.
template <class T>
struct BasicNetwork {
  std::vector<LayerSpec> layers;
  std::vector<std::vector<BasicTensor<T>>> params;
  std::vector<bool> frozen;
  Shape input_shape;
  std::uint64_t seed = 0;

  // Builds the layer stack and draws uniform fan-in scaled initial weights
  // from `seed`. Throws ShapeError when consecutive layers are incompatible.
  static BasicNetwork create(std::vector<LayerSpec> layers, Shape input_shape, std::uint64_t seed);

  std::size_t parameter_count() const;
  // Output shape of every layer, validating compatibility on the way.
  std::vector<Shape> layer_shapes() const;
  Shape output_shape() const { return layer_shapes().back(); }
  bool ends_with_softmax() const { return !layers.empty() && layers.back().kind == LayerKind::Softmax; }

  template <class U>
  BasicNetwork<U> cast() const;
};

using Network = BasicNetwork<float>;

// Per-layer forward state kept for the backward pass.
template <class T>
struct LayerCache {
  BasicTensor<T> input;
  BasicTensor<T> output;
  std::vector<BasicTensor<T>> aux;
  std::vector<int> index;
};

template <class T>
struct BasicTape {
  std::vector<LayerCache<T>> caches;
  std::size_t begin_layer = 0;
  std::size_t end_layer = 0;
  bool recorded = false;
  void clear() {
    caches.clear();
    recorded = false;
  }
};

using Tape = BasicTape<float>;

struct ForwardOptions {
  bool training = false;
  // Run layers [0, stop_before). Defaults to every layer.
  std::optional<std::size_t> stop_before;
  std::uint64_t dropout_seed = 0;
};

template <class T>
struct BasicGradients {
  std::vector<std::vector<BasicTensor<T>>> params;
  BasicTensor<T> input;
  // Gradient w.r.t. each layer's output; only filled when requested.
  std::vector<BasicTensor<T>> activations;
};

using Gradients = BasicGradients<float>;

// Runs a batched forward pass. `input` is [batch, ...input_shape]. When a tape
// is given it is filled for a later backward().
template <class T>
BasicTensor<T> forward(const BasicNetwork<T>& net, const BasicTensor<T>& input, const ForwardOptions& opts = {},
                       BasicTape<T>* tape = nullptr);

// Forward pass that skips a trailing Softmax, returning logits.
template <class T>
BasicTensor<T> forward_logits(const BasicNetwork<T>& net, const BasicTensor<T>& input,
                              const ForwardOptions& opts = {}, BasicTape<T>* tape = nullptr);

// Backpropagates `output_grad` (shaped like the taped forward's output).
// Frozen layers receive zero gradient tensors.
template <class T>
BasicGradients<T> backward(const BasicNetwork<T>& net, const BasicTape<T>& tape, const BasicTensor<T>& output_grad,
                           bool keep_activation_grads = false);

// Mean cross-entropy over the batch from logits [B, C]; grad is w.r.t. the logits.
template <class T>
double softmax_cross_entropy(const BasicTensor<T>& logits, std::span<const int> labels, BasicTensor<T>* grad);

// Mean cross-entropy from probabilities [B, C]; grad is w.r.t. the probabilities.
template <class T>
double cross_entropy(const BasicTensor<T>& probs, std::span<const int> labels, BasicTensor<T>* grad);

int argmax_row(std::span<const float> row);
std::vector<int> argmax_rows(const Tensor& scores);

// Exact GELU, x * Phi(x).
inline double gelu(double x) { return 0.5 * x * std::erfc(-x / std::sqrt(2.0)); }

}  // namespace scdet
