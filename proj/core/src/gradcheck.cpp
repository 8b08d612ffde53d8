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

#include "scdet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace scdet {

namespace {

struct LossFn {
  const BasicNetwork<double>& net;
  const BasicTensor<double>& input;
  const GradCheckOptions& opts;
  BasicTensor<double> projection;

  double operator()(BasicTape<double>* tape, BasicTensor<double>* grad) const {
    ForwardOptions fo;
    fo.training = opts.training;
    fo.dropout_seed = opts.seed;
    const auto out = forward(net, input, fo, tape);
    if (opts.loss == GradCheckOptions::Loss::CrossEntropy) return cross_entropy(out, opts.labels, grad);
    double l = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) l += out[i] * projection[i];
    if (grad) *grad = projection;
    return l;
  }
};

}  // namespace

double check_gradients(const Network& net_f, const Tensor& input_f, double h, const GradCheckOptions& opts) {
  if (net_f.parameter_count() > opts.max_parameters)
    throw ConfigError("check_gradients is limited to " + std::to_string(opts.max_parameters) + " parameters");
  if (opts.loss == GradCheckOptions::Loss::CrossEntropy && !net_f.ends_with_softmax())
    throw ConfigError("cross-entropy gradient check needs a trailing Softmax");
  auto net = net_f.cast<double>();
  const auto input = input_f.cast<double>();

  Shape out_shape{input.dim(0)};
  const auto os = net.output_shape();
  out_shape.insert(out_shape.end(), os.begin(), os.end());
  BasicTensor<double> projection(out_shape);
  std::mt19937_64 rng(opts.seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (auto& v : projection.storage()) v = u(rng);

  LossFn loss{net, input, opts, projection};
  BasicTape<double> tape;
  BasicTensor<double> out_grad;
  loss(&tape, &out_grad);
  auto grads = backward(net, tape, out_grad);

  bool fault_pending = opts.inject_fault != 0.0;
  double worst = 0.0;
  for (std::size_t li = 0; li < net.layers.size(); ++li) {
    if (net.frozen[li]) continue;
    for (std::size_t pi = 0; pi < net.params[li].size(); ++pi) {
      auto& p = net.params[li][pi];
      for (std::size_t k = 0; k < p.size(); ++k) {
        double analytic = grads.params[li][pi][k];
        if (fault_pending) {
          analytic += opts.inject_fault;
          fault_pending = false;
        }
        const double saved = p[k];
        p[k] = saved + h;
        const double up = loss(nullptr, nullptr);
        p[k] = saved - h;
        const double down = loss(nullptr, nullptr);
        p[k] = saved;
        const double numeric = (up - down) / (2.0 * h);
        const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
        worst = std::max(worst, std::abs(analytic - numeric) / denom);
      }
    }
  }
  return worst;
}

}  // namespace scdet
