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

#include "scdet/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "scdet/byteio.hpp"
#include "scdet/datasets.hpp"

namespace scdet {

namespace {

std::size_t sample_size(const Tensor& x) { return x.size() / static_cast<std::size_t>(x.dim(0)); }

void require_batch(const Tensor& x, std::span<const int> labels) {
  if (x.rank() < 2) throw ShapeError("attacks expect a batch tensor");
  if (labels.size() != static_cast<std::size_t>(x.dim(0))) throw ShapeError("label count does not match batch");
}

void clip01(Tensor& x) {
  for (auto& v : x.storage()) v = std::clamp(v, 0.f, 1.f);
}

Tensor one_sample(const Tensor& x, std::size_t i) { return x.rows(static_cast<int>(i), static_cast<int>(i) + 1); }

double l2_distance(std::span<const float> a, std::span<const float> b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (static_cast<double>(a[i]) - b[i]) * (static_cast<double>(a[i]) - b[i]);
  return std::sqrt(s);
}

}  // namespace

Tensor logit_input_gradient(const Network& net, const Tensor& x, const Tensor& logit_weights, Tensor* logits) {
  Tape tape;
  Tensor z = forward_logits(net, x, {}, &tape);
  if (z.shape() != logit_weights.shape()) throw ShapeError("logit weights must match logits " + shape_string(z.shape()));
  auto g = backward(net, tape, logit_weights);
  g.input.require_finite("input gradient");
  if (logits) *logits = std::move(z);
  return std::move(g.input);
}

Tensor loss_input_gradient(const Network& net, const Tensor& x, std::span<const int> labels, double* loss) {
  require_batch(x, labels);
  Tape tape;
  const Tensor z = forward_logits(net, x, {}, &tape);
  Tensor dz;
  const double l = softmax_cross_entropy(z, labels, &dz);
  if (loss) *loss = l;
  auto g = backward(net, tape, dz);
  g.input.require_finite("input gradient");
  return std::move(g.input);
}

Tensor fgsm(const Network& net, const Tensor& x, std::span<const int> labels, double eps) {
  if (!(eps >= 0)) throw ConfigError("FGSM epsilon must be nonnegative");
  const Tensor g = loss_input_gradient(net, x, labels);
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const float s = g[i] > 0 ? 1.f : (g[i] < 0 ? -1.f : 0.f);
    out[i] = x[i] + static_cast<float>(eps) * s;
  }
  clip01(out);
  return out;
}

Tensor pgd_l2(const Tensor& x, const GradientFn& grad, double eps, double step, int steps) {
  if (!(eps >= 0) || !(step >= 0)) throw ConfigError("PGD epsilon and step must be nonnegative");
  if (steps < 1) throw ConfigError("PGD needs at least one step");
  const std::size_t n = sample_size(x);
  const auto batch = static_cast<std::size_t>(x.dim(0));
  Tensor cur = x;
  for (int s = 0; s < steps; ++s) {
    const Tensor g = grad(cur);
    if (g.shape() != x.shape()) throw ShapeError("PGD gradient shape mismatch");
    g.require_finite("PGD gradient");
    for (std::size_t b = 0; b < batch; ++b) {
      float* c = cur.data() + b * n;
      const float* gb = g.data() + b * n;
      const float* x0 = x.data() + b * n;
      double norm = 0;
      for (std::size_t i = 0; i < n; ++i) norm += static_cast<double>(gb[i]) * gb[i];
      norm = std::sqrt(norm);
      if (norm > 0)
        for (std::size_t i = 0; i < n; ++i) c[i] += static_cast<float>(step * gb[i] / norm);
      double d = 0;
      for (std::size_t i = 0; i < n; ++i) d += (static_cast<double>(c[i]) - x0[i]) * (static_cast<double>(c[i]) - x0[i]);
      d = std::sqrt(d);
      const double shrink = d > eps ? eps / d : 1.0;
      for (std::size_t i = 0; i < n; ++i)
        c[i] = std::clamp(static_cast<float>(x0[i] + (c[i] - x0[i]) * shrink), 0.f, 1.f);
    }
  }
  return cur;
}

Tensor pgd(const Network& net, const Tensor& x, std::span<const int> labels, double eps, double step, int steps) {
  require_batch(x, labels);
  const std::vector<int> y(labels.begin(), labels.end());
  return pgd_l2(x, [&](const Tensor& cur) { return loss_input_gradient(net, cur, y); }, eps, step, steps);
}

std::size_t AttackOutcome::successes() const { return static_cast<std::size_t>(std::count(success.begin(), success.end(), true)); }

namespace {

int runner_up(std::span<const float> z, int y) {
  int best = -1;
  for (int j = 0; j < static_cast<int>(z.size()); ++j)
    if (j != y && (best < 0 || z[static_cast<std::size_t>(j)] > z[static_cast<std::size_t>(best)])) best = j;
  return best;
}

// One C&W run at fixed c from the original image; updates the best result.
bool cw_fixed_c(const Network& net, const Tensor& x0, int y, double c, const AdversarialParams& p, double& best_d2,
                Tensor& best) {
  const std::size_t n = x0.size();
  std::vector<double> w(n), m(n, 0), v(n, 0);
  for (std::size_t i = 0; i < n; ++i) w[i] = std::atanh(std::clamp(2.0 * x0[i] - 1.0, -1 + 1e-6, 1 - 1e-6));
  Tensor xp(x0.shape());
  bool found = false;
  double prev_loss = std::numeric_limits<double>::infinity();
  const int check_every = std::max(1, p.cw_max_iter / 10);
  for (int it = 0; it <= p.cw_max_iter; ++it) {
    for (std::size_t i = 0; i < n; ++i) xp[i] = static_cast<float>((std::tanh(w[i]) + 1) / 2);
    Tensor logits;
    Tape tape;
    logits = forward_logits(net, xp, {}, &tape);
    const auto z = logits.values();
    const int j = runner_up(z, y);
    const double f = z[static_cast<std::size_t>(y)] - z[static_cast<std::size_t>(j)];
    double d2 = 0;
    for (std::size_t i = 0; i < n; ++i) d2 += (static_cast<double>(xp[i]) - x0[i]) * (static_cast<double>(xp[i]) - x0[i]);
    if (f < 0 && d2 < best_d2) {
      best_d2 = d2;
      best = xp;
      found = true;
    }
    if (it == p.cw_max_iter) break;
    const double loss = d2 + c * std::max(f, -p.cw_kappa);
    if (it % check_every == 0) {
      if (loss > prev_loss * 0.9999) break;
      prev_loss = loss;
    }
    std::vector<double> gx(n);
    for (std::size_t i = 0; i < n; ++i) gx[i] = 2.0 * (static_cast<double>(xp[i]) - x0[i]);
    if (f > -p.cw_kappa) {
      Tensor dz(logits.shape());
      dz[static_cast<std::size_t>(y)] = 1.f;
      dz[static_cast<std::size_t>(j)] = -1.f;
      const auto g = backward(net, tape, dz);
      for (std::size_t i = 0; i < n; ++i) gx[i] += c * g.input[i];
    }
    const double b1 = 0.9, b2 = 0.999, t = it + 1;
    for (std::size_t i = 0; i < n; ++i) {
      const double th = std::tanh(w[i]);
      const double gw = gx[i] * (1 - th * th) / 2;
      m[i] = b1 * m[i] + (1 - b1) * gw;
      v[i] = b2 * v[i] + (1 - b2) * gw * gw;
      w[i] -= p.cw_lr * (m[i] / (1 - std::pow(b1, t))) / (std::sqrt(v[i] / (1 - std::pow(b2, t))) + 1e-8);
    }
  }
  return found;
}

}  // namespace

AttackOutcome cw_l2(const Network& net, const Tensor& x, std::span<const int> labels, const AdversarialParams& p) {
  require_batch(x, labels);
  if (!(p.cw_c_min > 0 && p.cw_c_max >= p.cw_c_min)) throw ConfigError("C&W c range must be positive and ordered");
  AttackOutcome out{x, std::vector<bool>(labels.size(), false), std::vector<double>(labels.size(), 0.0)};
  const std::size_t n = sample_size(x);
  for (std::size_t b = 0; b < labels.size(); ++b) {
    const Tensor x0 = one_sample(x, b);
    const int y = labels[b];
    if (argmax_row(forward_logits(net, x0).values()) != y) {
      out.success[b] = true;
      continue;
    }
    double best_d2 = std::numeric_limits<double>::infinity();
    Tensor best = x0;
    double lo = 0, hi = p.cw_c_max, c = p.cw_c_min;
    for (int s = 0; s < p.cw_search_steps; ++s) {
      if (cw_fixed_c(net, x0, y, c, p, best_d2, best)) {
        hi = std::min(hi, c);
        c = (lo + hi) / 2;
      } else {
        lo = std::max(lo, c);
        c = hi < p.cw_c_max ? (lo + hi) / 2 : std::min(c * 10, p.cw_c_max);
      }
    }
    if (std::isfinite(best_d2)) {
      out.success[b] = true;
      out.l2[b] = std::sqrt(best_d2);
      std::copy(best.storage().begin(), best.storage().end(), out.x_adv.storage().begin() + static_cast<long>(b * n));
    }
  }
  return out;
}

AttackOutcome deepfool(const Network& net, const Tensor& x, const AdversarialParams& p) {
  if (x.rank() < 2) throw ShapeError("attacks expect a batch tensor");
  const auto batch = static_cast<std::size_t>(x.dim(0));
  AttackOutcome out{x, std::vector<bool>(batch, false), std::vector<double>(batch, 0.0)};
  const std::size_t n = sample_size(x);
  for (std::size_t b = 0; b < batch; ++b) {
    const Tensor x0 = one_sample(x, b);
    Tensor cur = x0;
    std::vector<double> r_tot(n, 0.0);
    const Tensor z0 = forward_logits(net, x0);
    const int k0 = argmax_row(z0.values());
    const int classes = z0.dim(1);
    for (int it = 0; it <= p.deepfool_max_iter; ++it) {
      // All class-difference gradients in one batched pass.
      Shape rep_shape = x0.shape();
      rep_shape[0] = classes;
      Tensor rep(rep_shape);
      for (int k = 0; k < classes; ++k)
        std::copy(cur.storage().begin(), cur.storage().end(), rep.storage().begin() + static_cast<long>(k * n));
      Tensor weights({classes, classes});
      for (int k = 0; k < classes; ++k) {
        weights[static_cast<std::size_t>(k * classes + k)] += 1.f;
        weights[static_cast<std::size_t>(k * classes + k0)] -= 1.f;
      }
      Tensor logits;
      const Tensor grads = logit_input_gradient(net, rep, weights, &logits);
      const auto z = logits.rows(0, 1).storage();
      if (argmax_row(z) != k0) {
        out.success[b] = true;
        break;
      }
      if (it == p.deepfool_max_iter) break;
      int best_k = -1;
      double best_dist = std::numeric_limits<double>::infinity(), best_f = 0, best_norm2 = 0;
      for (int k = 0; k < classes; ++k) {
        if (k == k0) continue;
        const double f = z[static_cast<std::size_t>(k)] - z[static_cast<std::size_t>(k0)];
        double norm2 = 0;
        for (std::size_t i = 0; i < n; ++i) norm2 += static_cast<double>(grads[k * n + i]) * grads[k * n + i];
        if (norm2 <= 0) continue;
        const double dist = std::abs(f) / std::sqrt(norm2);
        if (dist < best_dist) best_dist = dist, best_k = k, best_f = f, best_norm2 = norm2;
      }
      if (best_k < 0) break;
      const double scale = (std::abs(best_f) + 1e-4) / best_norm2;
      for (std::size_t i = 0; i < n; ++i) {
        r_tot[i] += scale * grads[static_cast<std::size_t>(best_k) * n + i];
        cur[i] = std::clamp(static_cast<float>(x0[i] + p.deepfool_overshoot * r_tot[i]), 0.f, 1.f);
      }
    }
    out.l2[b] = l2_distance(cur.values(), x0.values());
    std::copy(cur.storage().begin(), cur.storage().end(), out.x_adv.storage().begin() + static_cast<long>(b * n));
  }
  return out;
}

std::string to_string(TriggerKind k) {
  switch (k) {
    case TriggerKind::Pattern: return "pattern";
    case TriggerKind::Instance: return "instance";
    case TriggerKind::Watermark: return "watermark";
    case TriggerKind::Square3x3: return "square3x3";
  }
  return "?";
}

TriggerSpec make_trigger(TriggerKind kind, std::uint64_t seed, const Tensor* instance) {
  constexpr int side = kImageSide;
  constexpr std::size_t n = side * side;
  TriggerSpec t{kind, std::vector<std::uint8_t>(n, 0), std::vector<float>(n, 0.f), 1.0};
  auto at = [](int r, int c) { return static_cast<std::size_t>(r * side + c); };
  switch (kind) {
    case TriggerKind::Pattern:
      // Checkerboard in the bottom-right corner.
      for (int r = 22; r < 27; ++r)
        for (int c = 22; c < 27; ++c)
          if ((r + c) % 2 == 0) t.mask[at(r, c)] = 1, t.content[at(r, c)] = 1.f;
      t.alpha = 0.4;
      break;
    case TriggerKind::Instance: {
      if (!instance || instance->size() != n) throw ConfigError("instance trigger needs a 28x28 instance image");
      std::mt19937_64 rng(seed);
      std::vector<std::size_t> idx(n);
      std::iota(idx.begin(), idx.end(), 0);
      std::shuffle(idx.begin(), idx.end(), rng);
      for (std::size_t i = 0; i < n / 4; ++i) t.mask[idx[i]] = 1;
      t.content.assign(instance->storage().begin(), instance->storage().end());
      t.alpha = 1.0;
      break;
    }
    case TriggerKind::Watermark:
      // Full-image diagonal hatch blended into the input.
      std::fill(t.mask.begin(), t.mask.end(), 1);
      for (int r = 0; r < side; ++r)
        for (int c = 0; c < side; ++c) t.content[at(r, c)] = (r + c) % 7 < 2 ? 1.f : 0.f;
      t.alpha = 0.4;
      break;
    case TriggerKind::Square3x3:
      for (int r = 1; r < 4; ++r)
        for (int c = 1; c < 4; ++c) t.mask[at(r, c)] = 1, t.content[at(r, c)] = 1.f;
      t.alpha = 1.0;
      break;
  }
  return t;
}

Tensor apply_trigger(const Tensor& x, const TriggerSpec& trigger) {
  const std::size_t n = trigger.mask.size();
  if (n == 0 || trigger.content.size() != n) throw ConfigError("malformed trigger");
  if (std::none_of(trigger.mask.begin(), trigger.mask.end(), [](auto m) { return m != 0; }))
    throw ConfigError("trigger mask is empty");
  if (!(trigger.alpha >= 0 && trigger.alpha <= 1)) throw ConfigError("trigger alpha must lie in [0, 1]");
  if (x.size() % n != 0) throw ShapeError("trigger does not match input " + shape_string(x.shape()));
  Tensor out = x;
  const auto a = static_cast<float>(trigger.alpha);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const std::size_t k = i % n;
    if (trigger.mask[k]) out[i] = (1.f - a) * x[i] + a * trigger.content[k];
  }
  return out;
}

PoisonedDataset poison_dataset(const Dataset& data, const TriggerSpec& trigger, double rate, int target_label,
                               std::uint64_t seed) {
  if (!(rate >= 0 && rate <= 1)) throw ConfigError("poison rate must lie in [0, 1]");
  PoisonedDataset out{data, {}, {}};
  const auto count = static_cast<std::size_t>(std::floor(rate * static_cast<double>(data.size())));
  if (count == 0) {
    if (rate > 0) out.warnings.push_back("poison rate " + std::to_string(rate) + " selects no samples");
    return out;
  }
  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(count);
  std::sort(idx.begin(), idx.end());
  const std::size_t n = data.inputs.size() / data.size();
  for (std::size_t i : idx) {
    const Tensor poisoned = apply_trigger(data.sample(i), trigger);
    std::copy(poisoned.storage().begin(), poisoned.storage().end(),
              out.data.inputs.storage().begin() + static_cast<long>(i * n));
    out.data.labels[i] = target_label;
  }
  out.poisoned = std::move(idx);
  return out;
}

double attack_success_rate(const Network& net, const Dataset& test, const TriggerSpec& trigger, int target_label) {
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < test.size(); ++i)
    if (test.labels[i] != target_label) keep.push_back(i);
  if (keep.empty()) throw DataError("no non-target samples to measure attack success");
  const auto pred = predict_labels(net, apply_trigger(test.gather(keep), trigger));
  return static_cast<double>(std::count(pred.begin(), pred.end(), target_label)) / static_cast<double>(pred.size());
}

BackdoorResult poison_and_train(const Dataset& train_set, const Dataset& test_set, const TriggerSpec& trigger,
                                double rate, int target_label, const std::vector<LayerSpec>& layers,
                                std::uint64_t seed, const TrainOptions& recipe) {
  auto poisoned = poison_dataset(train_set, trigger, rate, target_label, seed);
  BackdoorResult r{Network::create(layers, train_set.sample_shape(), seed), 0, 0, std::move(poisoned.poisoned),
                   std::move(poisoned.warnings)};
  TrainOptions opts = recipe;
  opts.seed = seed;
  train(r.model, poisoned.data, opts);
  r.clean_accuracy = accuracy(r.model, test_set);
  r.attack_success_rate = attack_success_rate(r.model, test_set, trigger, target_label);
  return r;
}

std::string to_string(ExtractionSource s) {
  switch (s) {
    case ExtractionSource::Fashion: return "fashion";
    case ExtractionSource::Cifar10: return "cifar10";
    case ExtractionSource::Cifar100: return "cifar100";
    case ExtractionSource::JBDA: return "jbda";
  }
  return "?";
}

Tensor jbda_queries(const Network& victim, const Tensor& seeds, const ExtractionParams& p, std::uint64_t seed) {
  if (seeds.empty() || seeds.rank() < 2) throw DataError("JBDA needs a non-empty seed set");
  if (p.rounds < 0) throw ConfigError("JBDA rounds must be nonnegative");
  Shape sample(seeds.shape().begin() + 1, seeds.shape().end());
  auto sub = Network::create(p.substitute, sample, seed);
  TrainOptions opts;
  opts.epochs = p.epochs;
  opts.lr = p.lr;
  opts.batch = p.batch;
  opts.seed = seed;
  Dataset set{seeds, {}};
  for (int round = 0; round < p.rounds; ++round) {
    set.labels = predict_labels(victim, set.inputs);
    train(sub, set, opts);
    const auto y = predict_labels(sub, set.inputs);
    const int classes = forward_logits(sub, set.inputs.rows(0, 1)).dim(1);
    Tensor onehot({static_cast<int>(set.size()), classes});
    for (std::size_t i = 0; i < set.size(); ++i) onehot[i * static_cast<std::size_t>(classes) + static_cast<std::size_t>(y[i])] = 1.f;
    const Tensor jac = logit_input_gradient(sub, set.inputs, onehot);
    Tensor fresh = set.inputs;
    for (std::size_t i = 0; i < fresh.size(); ++i) {
      const float s = jac[i] > 0 ? 1.f : (jac[i] < 0 ? -1.f : 0.f);
      fresh[i] = std::clamp(fresh[i] + static_cast<float>(p.lambda) * s, 0.f, 1.f);
    }
    set = concat(set, Dataset{std::move(fresh), std::vector<int>(set.size(), 0)});
  }
  return std::move(set.inputs);
}

Tensor extraction_queries(ExtractionSource source, const Network& victim, const Dataset& pool, std::size_t count,
                          const ExtractionParams& p, std::uint64_t seed) {
  if (pool.size() == 0) throw DataError(to_string(source) + " query pool is missing or empty");
  if (count == 0 || count > pool.size())
    throw DataError("cannot draw " + std::to_string(count) + " queries from a pool of " + std::to_string(pool.size()));
  if (pool.sample_shape() != Shape{1, kImageSide, kImageSide}) throw DataError("query pool must be 28x28 grayscale");
  std::vector<std::size_t> idx(pool.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(count);
  const Tensor drawn = pool.gather(idx);
  if (source != ExtractionSource::JBDA) return drawn;
  return jbda_queries(victim, drawn, p, seed);
}

std::string encode_inputs(const Tensor& images) {
  constexpr std::size_t n = kImageSide * kImageSide;
  if (images.rank() < 1 || images.size() != static_cast<std::size_t>(images.dim(0)) * n)
    throw ShapeError("SCIN records must be 28x28");
  byteio::Writer w;
  w.bytes("SCIN");
  w.u32(static_cast<std::uint32_t>(images.dim(0)));
  for (float v : images.values()) w.f32(v);
  return w.data();
}

Tensor decode_inputs(std::string_view bytes) {
  constexpr std::size_t n = kImageSide * kImageSide;
  byteio::Reader r(bytes, "SCIN");
  if (r.bytes(4) != "SCIN") throw DataError("not an SCIN input file");
  const auto count = r.u32();
  if (count == 0) throw DataError("SCIN: empty input file");
  if (r.remaining() != 4ull * n * count) throw DataError("SCIN: record count does not match payload");
  Tensor out({static_cast<int>(count), 1, kImageSide, kImageSide});
  for (auto& v : out.storage()) v = r.f32();
  return out;
}

}  // namespace scdet
