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

#include "scdet/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace scdet {

Tensor Dataset::sample(std::size_t i) const {
  const std::size_t stride = inputs.size() / size();
  Shape s = sample_shape();
  return Tensor(s, std::vector<float>(inputs.storage().begin() + static_cast<std::ptrdiff_t>(i * stride),
                                      inputs.storage().begin() + static_cast<std::ptrdiff_t>((i + 1) * stride)));
}

Tensor Dataset::gather(std::span<const std::size_t> indices) const {
  const std::size_t stride = inputs.size() / size();
  Shape s{static_cast<int>(indices.size())};
  const Shape ss = sample_shape();
  s.insert(s.end(), ss.begin(), ss.end());
  std::vector<float> data;
  data.reserve(indices.size() * stride);
  for (std::size_t i : indices) {
    auto first = inputs.storage().begin() + static_cast<std::ptrdiff_t>(i * stride);
    data.insert(data.end(), first, first + static_cast<std::ptrdiff_t>(stride));
  }
  return Tensor(std::move(s), std::move(data));
}

std::vector<int> Dataset::gather_labels(std::span<const std::size_t> indices) const {
  std::vector<int> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(labels[i]);
  return out;
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  return Dataset{gather(indices), gather_labels(indices)};
}

Dataset concat(const Dataset& a, const Dataset& b) {
  if (a.size() == 0) return b;
  if (b.size() == 0) return a;
  if (a.sample_shape() != b.sample_shape()) throw ShapeError("concat: sample shapes differ");
  Shape s = a.inputs.shape();
  s[0] = static_cast<int>(a.size() + b.size());
  Tensor::Storage data = a.inputs.storage();
  data.insert(data.end(), b.inputs.storage().begin(), b.inputs.storage().end());
  std::vector<int> labels = a.labels;
  labels.insert(labels.end(), b.labels.begin(), b.labels.end());
  return Dataset{Tensor(std::move(s), std::move(data)), std::move(labels)};
}

Optimizer::Optimizer(OptimizerKind kind, double lr, AdamParams adam) : kind_(kind), lr_(lr), adam_(adam) {
  if (lr < 0.0 || !std::isfinite(lr)) throw ConfigError("learning rate must be finite and non-negative");
}

void Optimizer::step(Network& net, const Gradients& grads) {
  ++step_;
  if (kind_ == OptimizerKind::Adam && m_.empty()) {
    m_.resize(net.params.size());
    v_.resize(net.params.size());
    for (std::size_t i = 0; i < net.params.size(); ++i)
      for (const auto& p : net.params[i]) {
        m_[i].emplace_back(p.size(), 0.f);
        v_[i].emplace_back(p.size(), 0.f);
      }
  }
  if (lr_ == 0.0) return;
  const double bc1 = 1.0 - std::pow(adam_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(adam_.beta2, static_cast<double>(step_));
  for (std::size_t i = 0; i < net.params.size(); ++i) {
    if (net.frozen[i]) continue;
    for (std::size_t j = 0; j < net.params[i].size(); ++j) {
      auto& p = net.params[i][j];
      const auto& g = grads.params[i][j];
      if (kind_ == OptimizerKind::SGD) {
        for (std::size_t k = 0; k < p.size(); ++k) p[k] -= static_cast<float>(lr_ * g[k]);
        continue;
      }
      auto& m = m_[i][j];
      auto& v = v_[i][j];
      const float b1 = static_cast<float>(adam_.beta1), b2 = static_cast<float>(adam_.beta2);
      const float step_size = static_cast<float>(lr_ / bc1);
      const float inv_bc2 = static_cast<float>(1.0 / bc2);
      const float eps = static_cast<float>(adam_.eps);
      for (std::size_t k = 0; k < p.size(); ++k) {
        m[k] = b1 * m[k] + (1.f - b1) * g[k];
        v[k] = b2 * v[k] + (1.f - b2) * g[k] * g[k];
        p[k] -= step_size * m[k] / (std::sqrt(v[k] * inv_bc2) + eps);
      }
    }
  }
}

namespace {

std::vector<std::vector<std::size_t>> epoch_batches(const Dataset& data, const TrainOptions& opts,
                                                    std::mt19937_64& rng) {
  const std::size_t n = data.size();
  const std::size_t batch = static_cast<std::size_t>(std::max(1, opts.batch));
  std::vector<std::vector<std::size_t>> batches;
  if (!opts.class_balanced) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t i = 0; i < n; i += batch)
      batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                           order.begin() + static_cast<std::ptrdiff_t>(std::min(n, i + batch)));
    return batches;
  }
  const int classes = opts.num_classes;
  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(classes));
  for (std::size_t i = 0; i < n; ++i) by_class[static_cast<std::size_t>(data.labels[i])].push_back(i);
  for (auto& c : by_class) std::shuffle(c.begin(), c.end(), rng);
  std::vector<std::size_t> cursor(by_class.size(), 0);
  const std::size_t count = (n + batch - 1) / batch;
  for (std::size_t b = 0; b < count; ++b) {
    std::vector<std::size_t> idx;
    for (std::size_t k = 0; k < batch; ++k) {
      auto& pool = by_class[(b * batch + k) % by_class.size()];
      auto& cur = cursor[(b * batch + k) % by_class.size()];
      if (cur == pool.size()) {
        std::shuffle(pool.begin(), pool.end(), rng);
        cur = 0;
      }
      idx.push_back(pool[cur++]);
    }
    batches.push_back(std::move(idx));
  }
  return batches;
}

}  // namespace

std::vector<EpochStats> train(Network& net, const Dataset& data, const TrainOptions& opts) {
  if (data.size() == 0) throw DataError("cannot train on an empty dataset");
  if (opts.lr < 0.0) throw ConfigError("learning rate must be non-negative");
  const int classes = net.output_shape().back();
  for (int y : data.labels)
    if (y < 0 || y >= classes) throw DataError("label " + std::to_string(y) + " outside network output arity");
  if (opts.class_balanced) {
    if (opts.num_classes < 1) throw ConfigError("class-balanced training needs num_classes");
    std::vector<int> counts(static_cast<std::size_t>(opts.num_classes), 0);
    for (int y : data.labels)
      if (y < opts.num_classes) ++counts[static_cast<std::size_t>(y)];
    for (int c = 0; c < opts.num_classes; ++c)
      if (counts[static_cast<std::size_t>(c)] == 0) throw DataError("class " + std::to_string(c) + " has no samples");
  }
  Optimizer opt(opts.optimizer, opts.lr);
  std::mt19937_64 rng(opts.seed);
  std::vector<EpochStats> curve;
  Tape tape;
  std::uint64_t step = 0;
  for (int e = 0; e < opts.epochs; ++e) {
    double loss_sum = 0.0;
    std::size_t correct = 0, seen = 0;
    for (const auto& idx : epoch_batches(data, opts, rng)) {
      const Tensor x = data.gather(idx);
      const auto y = data.gather_labels(idx);
      ForwardOptions fo;
      fo.training = true;
      fo.dropout_seed = opts.seed * 0x100000001B3ULL + (++step);
      const Tensor logits = forward_logits(net, x, fo, &tape);
      Tensor grad;
      loss_sum += softmax_cross_entropy(logits, y, &grad) * static_cast<double>(idx.size());
      const auto pred = argmax_rows(logits);
      for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == y[i];
      seen += idx.size();
      const Gradients g = backward(net, tape, grad);
      opt.step(net, g);
    }
    EpochStats s{loss_sum / static_cast<double>(seen), static_cast<double>(correct) / static_cast<double>(seen)};
    curve.push_back(s);
    if (opts.on_epoch) opts.on_epoch(e, s);
  }
  return curve;
}

Tensor predict(const Network& net, const Tensor& inputs, int batch) {
  const int n = inputs.dim(0);
  std::vector<float> out;
  Shape out_shape;
  for (int i = 0; i < n; i += batch) {
    const Tensor y = forward(net, inputs.rows(i, std::min(n, i + batch)));
    if (out_shape.empty()) out_shape = y.shape();
    out.insert(out.end(), y.storage().begin(), y.storage().end());
  }
  out_shape[0] = n;
  return Tensor(std::move(out_shape), std::move(out));
}

std::vector<int> predict_labels(const Network& net, const Tensor& inputs, int batch) {
  return argmax_rows(predict(net, inputs, batch));
}

double accuracy(const Network& net, const Dataset& data) {
  if (data.size() == 0) throw DataError("accuracy of an empty dataset");
  const auto pred = predict_labels(net, data.inputs);
  std::size_t ok = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) ok += pred[i] == data.labels[i];
  return static_cast<double>(ok) / static_cast<double>(data.size());
}

}  // namespace scdet
