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

#include "scdet/network.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

namespace scdet {

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

std::string to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::Conv2D: return "Conv2D";
    case LayerKind::MaxPool2D: return "MaxPool2D";
    case LayerKind::FullyConnected: return "FullyConnected";
    case LayerKind::ReLU: return "ReLU";
    case LayerKind::GELU: return "GELU";
    case LayerKind::Softmax: return "Softmax";
    case LayerKind::BGRU: return "BGRU";
    case LayerKind::Dropout: return "Dropout";
    case LayerKind::Conv1D: return "Conv1D";
    case LayerKind::TemporalMean: return "TemporalMean";
  }
  return "?";
}

LayerSpec LayerSpec::conv2d(int kernel, int out_channels) {
  LayerSpec s;
  s.kind = LayerKind::Conv2D;
  s.kernel = kernel;
  s.channels = out_channels;
  return s;
}
LayerSpec LayerSpec::conv1d(int kernel, int out_channels) {
  LayerSpec s;
  s.kind = LayerKind::Conv1D;
  s.kernel = kernel;
  s.channels = out_channels;
  return s;
}
LayerSpec LayerSpec::max_pool(int kernel) {
  LayerSpec s;
  s.kind = LayerKind::MaxPool2D;
  s.kernel = kernel;
  return s;
}
LayerSpec LayerSpec::fully_connected(int units, bool per_position) {
  LayerSpec s;
  s.kind = LayerKind::FullyConnected;
  s.units = units;
  s.per_position = per_position;
  return s;
}
LayerSpec LayerSpec::relu() { return LayerSpec{LayerKind::ReLU}; }
LayerSpec LayerSpec::gelu() { return LayerSpec{LayerKind::GELU}; }
LayerSpec LayerSpec::softmax() { return LayerSpec{LayerKind::Softmax}; }
LayerSpec LayerSpec::bgru(int hidden) {
  LayerSpec s;
  s.kind = LayerKind::BGRU;
  s.hidden = hidden;
  return s;
}
LayerSpec LayerSpec::dropout(float rate) {
  if (!(rate >= 0.f && rate < 1.f)) throw ConfigError("dropout rate must be in [0,1)");
  LayerSpec s;
  s.kind = LayerKind::Dropout;
  s.rate = rate;
  return s;
}
LayerSpec LayerSpec::temporal_mean() { return LayerSpec{LayerKind::TemporalMean}; }

bool LayerSpec::has_parameters() const {
  return kind == LayerKind::Conv2D || kind == LayerKind::Conv1D || kind == LayerKind::FullyConnected ||
         kind == LayerKind::BGRU;
}

namespace {

template <class T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapM = Eigen::Map<Mat<T>>;
template <class T>
using CMapM = Eigen::Map<const Mat<T>>;
template <class T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

Shape layer_output_shape(const LayerSpec& l, const Shape& in) {
  auto fail = [&](const std::string& why) {
    throw ShapeError(to_string(l.kind) + " cannot take input " + shape_string(in) + ": " + why);
  };
  switch (l.kind) {
    case LayerKind::Conv2D:
      if (in.size() != 3) fail("expects [C,H,W]");
      if (l.kernel < 1 || l.channels < 1) fail("bad kernel/channels");
      if (in[1] < l.kernel || in[2] < l.kernel) fail("kernel larger than input");
      return {l.channels, in[1] - l.kernel + 1, in[2] - l.kernel + 1};
    case LayerKind::Conv1D:
      if (in.size() != 2) fail("expects [C,L]");
      if (l.kernel < 1 || l.channels < 1) fail("bad kernel/channels");
      if (in[1] < l.kernel) fail("kernel larger than input");
      return {l.channels, in[1] - l.kernel + 1};
    case LayerKind::MaxPool2D:
      if (in.size() != 3) fail("expects [C,H,W]");
      if (l.kernel < 1 || in[1] / l.kernel < 1 || in[2] / l.kernel < 1) fail("pool collapses spatial dims");
      return {in[0], in[1] / l.kernel, in[2] / l.kernel};
    case LayerKind::FullyConnected: {
      if (l.units < 1) fail("units must be positive");
      if (!l.per_position) return {l.units};
      Shape out = in;
      out.back() = l.units;
      return out;
    }
    case LayerKind::BGRU:
      if (in.size() != 2) fail("expects [T,F]");
      if (l.hidden < 1) fail("hidden must be positive");
      return {in[0], 2 * l.hidden};
    case LayerKind::TemporalMean:
      if (in.size() != 2) fail("expects [T,F]");
      return {in[1]};
    case LayerKind::ReLU:
    case LayerKind::GELU:
    case LayerKind::Softmax:
    case LayerKind::Dropout:
      return in;
  }
  fail("unknown layer");
  return {};
}

std::vector<Shape> param_shapes(const LayerSpec& l, const Shape& in) {
  switch (l.kind) {
    case LayerKind::Conv2D:
      return {{l.channels, in[0], l.kernel, l.kernel}, {l.channels}};
    case LayerKind::Conv1D:
      return {{l.channels, in[0], l.kernel}, {l.channels}};
    case LayerKind::FullyConnected: {
      const int fan_in = l.per_position ? in.back() : static_cast<int>(numel(in));
      return {{l.units, fan_in}, {l.units}};
    }
    case LayerKind::BGRU: {
      const int h = l.hidden, f = in[1];
      std::vector<Shape> s;
      for (int d = 0; d < 2; ++d) {
        s.push_back({3 * h, f});
        s.push_back({3 * h, h});
        s.push_back({3 * h});
        s.push_back({3 * h});
      }
      return s;
    }
    default:
      return {};
  }
}

template <class T>
T sigmoid(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

// ---- convolution helpers -------------------------------------------------

// cols[(c*k + i)*k + j, y*wo + x] = in[c, y+i, x+j]
template <class T>
void im2col2d(const T* in, int c, int h, int w, int k, T* cols) {
  const int ho = h - k + 1, wo = w - k + 1;
  for (int ch = 0; ch < c; ++ch)
    for (int i = 0; i < k; ++i)
      for (int j = 0; j < k; ++j) {
        T* row = cols + static_cast<std::size_t>((ch * k + i) * k + j) * ho * wo;
        for (int y = 0; y < ho; ++y) {
          const T* src = in + (static_cast<std::size_t>(ch) * h + y + i) * w + j;
          std::copy(src, src + wo, row + y * wo);
        }
      }
}

template <class T>
void col2im2d(const T* cols, int c, int h, int w, int k, T* in) {
  const int ho = h - k + 1, wo = w - k + 1;
  for (int ch = 0; ch < c; ++ch)
    for (int i = 0; i < k; ++i)
      for (int j = 0; j < k; ++j) {
        const T* row = cols + static_cast<std::size_t>((ch * k + i) * k + j) * ho * wo;
        for (int y = 0; y < ho; ++y) {
          T* dst = in + (static_cast<std::size_t>(ch) * h + y + i) * w + j;
          for (int x = 0; x < wo; ++x) dst[x] += row[y * wo + x];
        }
      }
}

template <class T>
void im2col1d(const T* in, int c, int len, int k, T* cols) {
  const int lo = len - k + 1;
  for (int ch = 0; ch < c; ++ch)
    for (int i = 0; i < k; ++i) std::copy(in + ch * len + i, in + ch * len + i + lo, cols + (ch * k + i) * lo);
}

template <class T>
void col2im1d(const T* cols, int c, int len, int k, T* in) {
  const int lo = len - k + 1;
  for (int ch = 0; ch < c; ++ch)
    for (int i = 0; i < k; ++i) {
      const T* row = cols + (ch * k + i) * lo;
      T* dst = in + ch * len + i;
      for (int x = 0; x < lo; ++x) dst[x] += row[x];
    }
}

// Shared body of Conv1D/Conv2D: per-sample im2col followed by a GEMM.
template <class T>
struct ConvGeom {
  int c, k, rows, cols;  // rows = C*k^d, cols = output positions
  bool two_d;
  int h, w;  // input extents (w unused for 1-D, h is length)
};

template <class T>
ConvGeom<T> conv_geom(const LayerSpec& l, const Shape& in) {
  if (l.kind == LayerKind::Conv2D) {
    const int ho = in[1] - l.kernel + 1, wo = in[2] - l.kernel + 1;
    return {in[0], l.kernel, in[0] * l.kernel * l.kernel, ho * wo, true, in[1], in[2]};
  }
  return {in[0], l.kernel, in[0] * l.kernel, in[1] - l.kernel + 1, false, in[1], 0};
}

template <class T>
void to_cols(const ConvGeom<T>& g, const T* x, T* cols) {
  if (g.two_d)
    im2col2d(x, g.c, g.h, g.w, g.k, cols);
  else
    im2col1d(x, g.c, g.h, g.k, cols);
}

template <class T>
void from_cols(const ConvGeom<T>& g, const T* cols, T* x) {
  if (g.two_d)
    col2im2d(cols, g.c, g.h, g.w, g.k, x);
  else
    col2im1d(cols, g.c, g.h, g.k, x);
}

template <class T>
BasicTensor<T> conv_forward(const LayerSpec& l, const std::vector<BasicTensor<T>>& p, const BasicTensor<T>& x,
                            const Shape& out_shape) {
  const int batch = x.dim(0);
  Shape in_shape(x.shape().begin() + 1, x.shape().end());
  const auto g = conv_geom<T>(l, in_shape);
  Shape full{batch};
  full.insert(full.end(), out_shape.begin(), out_shape.end());
  BasicTensor<T> y(full);
  std::vector<T> cols(static_cast<std::size_t>(g.rows) * g.cols);
  CMapM<T> wmat(p[0].data(), l.channels, g.rows);
  Eigen::Map<const Vec<T>> bias(p[1].data(), l.channels);
  const std::size_t in_stride = numel(in_shape), out_stride = numel(out_shape);
  for (int b = 0; b < batch; ++b) {
    to_cols(g, x.data() + b * in_stride, cols.data());
    MapM<T> out(y.data() + b * out_stride, l.channels, g.cols);
    out.noalias() = wmat * CMapM<T>(cols.data(), g.rows, g.cols);
    out.colwise() += bias;
  }
  return y;
}

template <class T>
BasicTensor<T> conv_backward(const LayerSpec& l, const std::vector<BasicTensor<T>>& p, const BasicTensor<T>& x,
                             const BasicTensor<T>& dy, std::vector<BasicTensor<T>>& dp) {
  const int batch = x.dim(0);
  Shape in_shape(x.shape().begin() + 1, x.shape().end());
  const auto g = conv_geom<T>(l, in_shape);
  BasicTensor<T> dx(x.shape());
  std::vector<T> cols(static_cast<std::size_t>(g.rows) * g.cols), dcols(cols.size());
  CMapM<T> wmat(p[0].data(), l.channels, g.rows);
  MapM<T> dw(dp[0].data(), l.channels, g.rows);
  Eigen::Map<Vec<T>> db(dp[1].data(), l.channels);
  const std::size_t in_stride = numel(in_shape), out_stride = static_cast<std::size_t>(l.channels) * g.cols;
  for (int b = 0; b < batch; ++b) {
    to_cols(g, x.data() + b * in_stride, cols.data());
    CMapM<T> go(dy.data() + b * out_stride, l.channels, g.cols);
    dw.noalias() += go * CMapM<T>(cols.data(), g.rows, g.cols).transpose();
    db += go.rowwise().sum();
    MapM<T>(dcols.data(), g.rows, g.cols).noalias() = wmat.transpose() * go;
    from_cols(g, dcols.data(), dx.data() + b * in_stride);
  }
  return dx;
}

// ---- fully connected -------------------------------------------------------

template <class T>
int fc_rows(const LayerSpec& l, const BasicTensor<T>& x) {
  return l.per_position ? static_cast<int>(x.size() / x.dim(-1)) : x.dim(0);
}

template <class T>
BasicTensor<T> fc_forward(const LayerSpec& l, const std::vector<BasicTensor<T>>& p, const BasicTensor<T>& x) {
  const int rows = fc_rows(l, x);
  const int fan_in = static_cast<int>(x.size() / rows);
  Shape out_shape;
  if (l.per_position) {
    out_shape = x.shape();
    out_shape.back() = l.units;
  } else {
    out_shape = {x.dim(0), l.units};
  }
  BasicTensor<T> y(out_shape);
  MapM<T> out(y.data(), rows, l.units);
  out.noalias() = CMapM<T>(x.data(), rows, fan_in) * CMapM<T>(p[0].data(), l.units, fan_in).transpose();
  out.rowwise() += Eigen::Map<const Vec<T>>(p[1].data(), l.units).transpose();
  return y;
}

template <class T>
BasicTensor<T> fc_backward(const LayerSpec& l, const std::vector<BasicTensor<T>>& p, const BasicTensor<T>& x,
                           const BasicTensor<T>& dy, std::vector<BasicTensor<T>>& dp) {
  const int rows = fc_rows(l, x);
  const int fan_in = static_cast<int>(x.size() / rows);
  CMapM<T> go(dy.data(), rows, l.units);
  MapM<T>(dp[0].data(), l.units, fan_in).noalias() += go.transpose() * CMapM<T>(x.data(), rows, fan_in);
  Eigen::Map<Vec<T>>(dp[1].data(), l.units) += go.colwise().sum().transpose();
  BasicTensor<T> dx(x.shape());
  MapM<T>(dx.data(), rows, fan_in).noalias() = go * CMapM<T>(p[0].data(), l.units, fan_in);
  return dx;
}

// ---- max pooling -----------------------------------------------------------

template <class T>
BasicTensor<T> pool_forward(const LayerSpec& l, const BasicTensor<T>& x, std::vector<int>& argmax) {
  const int batch = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3), k = l.kernel;
  const int ho = h / k, wo = w / k;
  BasicTensor<T> y({batch, c, ho, wo});
  argmax.assign(y.size(), 0);
  std::size_t o = 0;
  for (int b = 0; b < batch; ++b)
    for (int ch = 0; ch < c; ++ch) {
      const std::size_t base = (static_cast<std::size_t>(b) * c + ch) * h * w;
      for (int yy = 0; yy < ho; ++yy)
        for (int xx = 0; xx < wo; ++xx, ++o) {
          std::size_t best = base + static_cast<std::size_t>(yy * k) * w + xx * k;
          for (int i = 0; i < k; ++i)
            for (int j = 0; j < k; ++j) {
              const std::size_t idx = base + static_cast<std::size_t>(yy * k + i) * w + xx * k + j;
              if (x[idx] > x[best]) best = idx;
            }
          y[o] = x[best];
          argmax[o] = static_cast<int>(best);
        }
    }
  return y;
}

// ---- BGRU --------------------------------------------------------------------
// Gate order inside the 3H blocks: reset, update, candidate.
// aux layout per direction d (offset 5*d): r, z, n, hn (Wh*h+bh candidate part),
// h (all hidden states incl. initial zeros, [T+1, B, H]).

template <class T>
BasicTensor<T> bgru_forward(const LayerSpec& l, const std::vector<BasicTensor<T>>& p, const BasicTensor<T>& x,
                            std::vector<BasicTensor<T>>* aux) {
  const int batch = x.dim(0), steps = x.dim(1), feat = x.dim(2), hid = l.hidden;
  BasicTensor<T> y({batch, steps, 2 * hid});
  if (aux) aux->clear();
  for (int d = 0; d < 2; ++d) {
    const auto& wx = p[4 * d];
    const auto& wh = p[4 * d + 1];
    const auto& bx = p[4 * d + 2];
    const auto& bh = p[4 * d + 3];
    // gx[b*T + t] = Wx x[b,t] + bx
    Mat<T> gx = CMapM<T>(x.data(), batch * steps, feat) * CMapM<T>(wx.data(), 3 * hid, feat).transpose();
    gx.rowwise() += Eigen::Map<const Vec<T>>(bx.data(), 3 * hid).transpose();
    CMapM<T> whm(wh.data(), 3 * hid, hid);
    Eigen::Map<const Vec<T>> bhv(bh.data(), 3 * hid);
    BasicTensor<T> r({steps, batch, hid}), z({steps, batch, hid}), n({steps, batch, hid}), hn({steps, batch, hid});
    BasicTensor<T> hs({steps + 1, batch, hid});
    Mat<T> h = Mat<T>::Zero(batch, hid);
    Mat<T> gh(batch, 3 * hid);
    for (int s = 0; s < steps; ++s) {
      const int t = d == 0 ? s : steps - 1 - s;
      gh.noalias() = h * whm.transpose();
      gh.rowwise() += bhv.transpose();
      for (int b = 0; b < batch; ++b) {
        const T* gxr = gx.data() + (static_cast<std::size_t>(b) * steps + t) * 3 * hid;
        const T* ghr = gh.data() + static_cast<std::size_t>(b) * 3 * hid;
        const std::size_t o = (static_cast<std::size_t>(s) * batch + b) * hid;
        T* yrow = y.data() + (static_cast<std::size_t>(b) * steps + t) * 2 * hid + d * hid;
        for (int j = 0; j < hid; ++j) {
          const T rr = sigmoid(gxr[j] + ghr[j]);
          const T zz = sigmoid(gxr[hid + j] + ghr[hid + j]);
          const T nn = std::tanh(gxr[2 * hid + j] + rr * ghr[2 * hid + j]);
          const T hp = h(b, j);
          const T hnew = (T(1) - zz) * nn + zz * hp;
          r[o + j] = rr;
          z[o + j] = zz;
          n[o + j] = nn;
          hn[o + j] = ghr[2 * hid + j];
          hs[o + j] = hp;
          yrow[j] = hnew;
        }
      }
      for (int b = 0; b < batch; ++b)
        for (int j = 0; j < hid; ++j) h(b, j) = y[(static_cast<std::size_t>(b) * steps + t) * 2 * hid + d * hid + j];
    }
    if (aux) {
      aux->push_back(std::move(r));
      aux->push_back(std::move(z));
      aux->push_back(std::move(n));
      aux->push_back(std::move(hn));
      aux->push_back(std::move(hs));
    }
  }
  return y;
}

template <class T>
BasicTensor<T> bgru_backward(const LayerSpec& l, const std::vector<BasicTensor<T>>& p, const BasicTensor<T>& x,
                             const std::vector<BasicTensor<T>>& aux, const BasicTensor<T>& dy,
                             std::vector<BasicTensor<T>>& dp) {
  const int batch = x.dim(0), steps = x.dim(1), feat = x.dim(2), hid = l.hidden;
  BasicTensor<T> dx(x.shape());
  for (int d = 0; d < 2; ++d) {
    const auto& r = aux[5 * d];
    const auto& z = aux[5 * d + 1];
    const auto& n = aux[5 * d + 2];
    const auto& hn = aux[5 * d + 3];
    const auto& hs = aux[5 * d + 4];
    CMapM<T> whm(p[4 * d + 1].data(), 3 * hid, hid);
    Mat<T> dgx(batch * steps, 3 * hid);
    Mat<T> dgh(batch, 3 * hid);
    Mat<T> hprev(batch, hid);
    Mat<T> dh = Mat<T>::Zero(batch, hid);
    MapM<T> dwh(dp[4 * d + 1].data(), 3 * hid, hid);
    Eigen::Map<Vec<T>> dbh(dp[4 * d + 3].data(), 3 * hid);
    for (int s = steps - 1; s >= 0; --s) {
      const int t = d == 0 ? s : steps - 1 - s;
      for (int b = 0; b < batch; ++b) {
        const std::size_t o = (static_cast<std::size_t>(s) * batch + b) * hid;
        const T* dyrow = dy.data() + (static_cast<std::size_t>(b) * steps + t) * 2 * hid + d * hid;
        T* gxrow = dgx.data() + (static_cast<std::size_t>(b) * steps + t) * 3 * hid;
        for (int j = 0; j < hid; ++j) {
          const T g = dh(b, j) + dyrow[j];
          const T rr = r[o + j], zz = z[o + j], nn = n[o + j], hp = hs[o + j];
          const T dn = g * (T(1) - zz) * (T(1) - nn * nn);
          const T dz = g * (hp - nn) * zz * (T(1) - zz);
          const T dr = dn * hn[o + j] * rr * (T(1) - rr);
          gxrow[j] = dr;
          gxrow[hid + j] = dz;
          gxrow[2 * hid + j] = dn;
          dgh(b, j) = dr;
          dgh(b, hid + j) = dz;
          dgh(b, 2 * hid + j) = dn * rr;
          dh(b, j) = g * zz;
          hprev(b, j) = hp;
        }
      }
      dwh.noalias() += dgh.transpose() * hprev;
      dbh += dgh.colwise().sum().transpose();
      dh.noalias() += dgh * whm;
    }
    CMapM<T> xm(x.data(), batch * steps, feat);
    MapM<T>(dp[4 * d].data(), 3 * hid, feat).noalias() += dgx.transpose() * xm;
    Eigen::Map<Vec<T>>(dp[4 * d + 2].data(), 3 * hid) += dgx.colwise().sum().transpose();
    MapM<T>(dx.data(), batch * steps, feat).noalias() += dgx * CMapM<T>(p[4 * d].data(), 3 * hid, feat);
  }
  return dx;
}

// ---- elementwise / misc ----------------------------------------------------

template <class T>
void softmax_rows(const T* in, T* out, std::size_t rows, std::size_t cols) {
  for (std::size_t i = 0; i < rows; ++i) {
    const T* a = in + i * cols;
    T* o = out + i * cols;
    const T mx = *std::max_element(a, a + cols);
    T sum = 0;
    for (std::size_t j = 0; j < cols; ++j) sum += (o[j] = std::exp(a[j] - mx));
    for (std::size_t j = 0; j < cols; ++j) o[j] /= sum;
  }
}

template <class T>
BasicTensor<T> layer_forward(const LayerSpec& l, const std::vector<BasicTensor<T>>& p, const BasicTensor<T>& x,
                             const Shape& out_shape, const ForwardOptions& opts, std::size_t layer_index,
                             LayerCache<T>* cache) {
  switch (l.kind) {
    case LayerKind::Conv2D:
    case LayerKind::Conv1D:
      return conv_forward(l, p, x, out_shape);
    case LayerKind::FullyConnected:
      return fc_forward(l, p, x);
    case LayerKind::MaxPool2D: {
      std::vector<int> idx;
      auto y = pool_forward(l, x, idx);
      if (cache) cache->index = std::move(idx);
      return y;
    }
    case LayerKind::ReLU: {
      BasicTensor<T> y = x;
      for (auto& v : y.storage()) v = v > T(0) ? v : T(0);
      return y;
    }
    case LayerKind::GELU: {
      BasicTensor<T> y = x;
      for (auto& v : y.storage()) v = static_cast<T>(gelu(static_cast<double>(v)));
      return y;
    }
    case LayerKind::Softmax: {
      BasicTensor<T> y(x.shape());
      const std::size_t cols = static_cast<std::size_t>(x.dim(-1));
      softmax_rows(x.data(), y.data(), x.size() / cols, cols);
      return y;
    }
    case LayerKind::Dropout: {
      if (!opts.training || l.rate == 0.f) return x;
      std::mt19937_64 rng(opts.dropout_seed ^ (0x9E3779B97F4A7C15ULL * (layer_index + 1)));
      std::bernoulli_distribution keep(1.0 - l.rate);
      BasicTensor<T> mask(x.shape());
      const T scale = T(1) / (T(1) - static_cast<T>(l.rate));
      BasicTensor<T> y = x;
      for (std::size_t i = 0; i < y.size(); ++i) {
        mask[i] = keep(rng) ? scale : T(0);
        y[i] *= mask[i];
      }
      if (cache) cache->aux = {std::move(mask)};
      return y;
    }
    case LayerKind::BGRU:
      return bgru_forward(l, p, x, cache ? &cache->aux : nullptr);
    case LayerKind::TemporalMean: {
      const int batch = x.dim(0), steps = x.dim(1), feat = x.dim(2);
      BasicTensor<T> y({batch, feat});
      for (int b = 0; b < batch; ++b)
        for (int t = 0; t < steps; ++t)
          for (int f = 0; f < feat; ++f)
            y[static_cast<std::size_t>(b) * feat + f] += x[(static_cast<std::size_t>(b) * steps + t) * feat + f];
      for (auto& v : y.storage()) v /= static_cast<T>(steps);
      return y;
    }
  }
  throw StateError("unknown layer kind");
}

template <class T>
BasicTensor<T> layer_backward(const LayerSpec& l, const std::vector<BasicTensor<T>>& p, const LayerCache<T>& c,
                              const BasicTensor<T>& dy, std::vector<BasicTensor<T>>& dp) {
  const auto& x = c.input;
  switch (l.kind) {
    case LayerKind::Conv2D:
    case LayerKind::Conv1D:
      return conv_backward(l, p, x, dy, dp);
    case LayerKind::FullyConnected:
      return fc_backward(l, p, x, dy, dp);
    case LayerKind::MaxPool2D: {
      BasicTensor<T> dx(x.shape());
      for (std::size_t o = 0; o < dy.size(); ++o) dx[static_cast<std::size_t>(c.index[o])] += dy[o];
      return dx;
    }
    case LayerKind::ReLU: {
      BasicTensor<T> dx = dy;
      for (std::size_t i = 0; i < dx.size(); ++i)
        if (!(x[i] > T(0))) dx[i] = T(0);
      return dx;
    }
    case LayerKind::GELU: {
      BasicTensor<T> dx = dy;
      constexpr double inv_sqrt_2pi = 0.39894228040143267794;
      for (std::size_t i = 0; i < dx.size(); ++i) {
        const double v = static_cast<double>(x[i]);
        const double cdf = 0.5 * std::erfc(-v / std::sqrt(2.0));
        const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
        dx[i] *= static_cast<T>(cdf + v * pdf);
      }
      return dx;
    }
    case LayerKind::Softmax: {
      BasicTensor<T> dx(x.shape());
      const std::size_t cols = static_cast<std::size_t>(x.dim(-1));
      const std::size_t rows = x.size() / cols;
      const auto& y = c.output;
      for (std::size_t i = 0; i < rows; ++i) {
        T dot = 0;
        for (std::size_t j = 0; j < cols; ++j) dot += dy[i * cols + j] * y[i * cols + j];
        for (std::size_t j = 0; j < cols; ++j) dx[i * cols + j] = y[i * cols + j] * (dy[i * cols + j] - dot);
      }
      return dx;
    }
    case LayerKind::Dropout: {
      if (c.aux.empty()) return dy;
      BasicTensor<T> dx = dy;
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] *= c.aux[0][i];
      return dx;
    }
    case LayerKind::BGRU:
      return bgru_backward(l, p, x, c.aux, dy, dp);
    case LayerKind::TemporalMean: {
      const int batch = x.dim(0), steps = x.dim(1), feat = x.dim(2);
      BasicTensor<T> dx(x.shape());
      for (int b = 0; b < batch; ++b)
        for (int t = 0; t < steps; ++t)
          for (int f = 0; f < feat; ++f)
            dx[(static_cast<std::size_t>(b) * steps + t) * feat + f] =
                dy[static_cast<std::size_t>(b) * feat + f] / static_cast<T>(steps);
      return dx;
    }
  }
  throw StateError("unknown layer kind");
}

}  // namespace

Shape infer_output_shape(const LayerSpec& layer, const Shape& input) { return layer_output_shape(layer, input); }

template <class T>
BasicNetwork<T> BasicNetwork<T>::create(std::vector<LayerSpec> layers, Shape input_shape, std::uint64_t seed) {
  BasicNetwork<T> net;
  net.layers = std::move(layers);
  net.input_shape = std::move(input_shape);
  net.seed = seed;
  net.frozen.assign(net.layers.size(), false);
  std::mt19937_64 rng(seed);
  Shape cur = net.input_shape;
  for (const auto& l : net.layers) {
    auto shapes = param_shapes(l, cur);
    std::vector<BasicTensor<T>> ps;
    for (std::size_t i = 0; i < shapes.size(); ++i) {
      BasicTensor<T> t(shapes[i]);
      double bound = 0.0;
      if (l.kind == LayerKind::BGRU) {
        bound = 1.0 / std::sqrt(static_cast<double>(l.hidden));
      } else if (i == 0) {
        const double fan_in = static_cast<double>(t.size() / static_cast<std::size_t>(shapes[0][0]));
        bound = std::sqrt(6.0 / fan_in);
      }
      if (bound > 0.0) {
        std::uniform_real_distribution<double> u(-bound, bound);
        for (auto& v : t.storage()) v = static_cast<T>(u(rng));
      }
      ps.push_back(std::move(t));
    }
    net.params.push_back(std::move(ps));
    cur = layer_output_shape(l, cur);
  }
  return net;
}

template <class T>
std::size_t BasicNetwork<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& ps : params)
    for (const auto& p : ps) n += p.size();
  return n;
}

template <class T>
std::vector<Shape> BasicNetwork<T>::layer_shapes() const {
  std::vector<Shape> out;
  Shape cur = input_shape;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto expected = param_shapes(layers[i], cur);
    if (params.size() != layers.size() || params[i].size() != expected.size())
      throw ShapeError("parameter list does not match layer " + std::to_string(i));
    for (std::size_t j = 0; j < expected.size(); ++j)
      if (params[i][j].shape() != expected[j])
        throw ShapeError("layer " + std::to_string(i) + " parameter " + std::to_string(j) + " has shape " +
                         shape_string(params[i][j].shape()) + ", expected " + shape_string(expected[j]));
    cur = layer_output_shape(layers[i], cur);
    out.push_back(cur);
  }
  return out;
}

template <class T>
template <class U>
BasicNetwork<U> BasicNetwork<T>::cast() const {
  BasicNetwork<U> out;
  out.layers = layers;
  out.frozen = frozen;
  out.input_shape = input_shape;
  out.seed = seed;
  for (const auto& ps : params) {
    std::vector<BasicTensor<U>> converted;
    for (const auto& p : ps) converted.push_back(p.template cast<U>());
    out.params.push_back(std::move(converted));
  }
  return out;
}

template <class T>
BasicTensor<T> forward(const BasicNetwork<T>& net, const BasicTensor<T>& input, const ForwardOptions& opts,
                       BasicTape<T>* tape) {
  if (input.rank() != static_cast<int>(net.input_shape.size()) + 1 ||
      !std::equal(net.input_shape.begin(), net.input_shape.end(), input.shape().begin() + 1))
    throw ShapeError("network expects [batch]" + shape_string(net.input_shape) + ", got " +
                     shape_string(input.shape()));
  const std::size_t end = std::min(opts.stop_before.value_or(net.layers.size()), net.layers.size());
  const auto shapes = net.layer_shapes();
  if (tape) {
    tape->clear();
    tape->caches.resize(end);
    tape->begin_layer = 0;
    tape->end_layer = end;
  }
  BasicTensor<T> cur = input;
  for (std::size_t i = 0; i < end; ++i) {
    LayerCache<T>* cache = tape ? &tape->caches[i] : nullptr;
    BasicTensor<T> next = layer_forward(net.layers[i], net.params[i], cur, shapes[i], opts, i, cache);
    if (!next.all_finite())
      throw NumericError("non-finite activation after layer " + std::to_string(i) + " (" +
                         to_string(net.layers[i].kind) + ")");
    if (cache) {
      cache->input = std::move(cur);
      cache->output = next;
    }
    cur = std::move(next);
  }
  if (tape) tape->recorded = true;
  return cur;
}

template <class T>
BasicTensor<T> forward_logits(const BasicNetwork<T>& net, const BasicTensor<T>& input, const ForwardOptions& opts,
                              BasicTape<T>* tape) {
  ForwardOptions o = opts;
  std::size_t end = net.layers.size();
  if (net.ends_with_softmax()) end -= 1;
  o.stop_before = std::min(end, opts.stop_before.value_or(end));
  return forward(net, input, o, tape);
}

template <class T>
BasicGradients<T> backward(const BasicNetwork<T>& net, const BasicTape<T>& tape, const BasicTensor<T>& output_grad,
                           bool keep_activation_grads) {
  if (!tape.recorded) throw StateError("backward called without a recorded forward tape");
  BasicGradients<T> g;
  g.params.resize(net.layers.size());
  for (std::size_t i = 0; i < net.layers.size(); ++i)
    for (const auto& p : net.params[i]) g.params[i].emplace_back(p.shape());
  if (keep_activation_grads) g.activations.resize(tape.end_layer);
  if (tape.end_layer == 0) {
    g.input = output_grad;
    return g;
  }
  if (output_grad.shape() != tape.caches[tape.end_layer - 1].output.shape())
    throw ShapeError("output gradient shape " + shape_string(output_grad.shape()) + " does not match output " +
                     shape_string(tape.caches[tape.end_layer - 1].output.shape()));
  BasicTensor<T> grad = output_grad;
  for (std::size_t i = tape.end_layer; i-- > tape.begin_layer;) {
    if (keep_activation_grads) g.activations[i] = grad;
    grad = layer_backward(net.layers[i], net.params[i], tape.caches[i], grad, g.params[i]);
    if (net.frozen[i])
      for (auto& p : g.params[i]) p.fill(T(0));
  }
  g.input = std::move(grad);
  return g;
}

template <class T>
double softmax_cross_entropy(const BasicTensor<T>& logits, std::span<const int> labels, BasicTensor<T>* grad) {
  const std::size_t cols = static_cast<std::size_t>(logits.dim(-1));
  const std::size_t rows = logits.size() / cols;
  if (labels.size() != rows) throw ShapeError("label count does not match batch");
  BasicTensor<T> probs(logits.shape());
  softmax_rows(logits.data(), probs.data(), rows, cols);
  double loss = 0.0;
  for (std::size_t i = 0; i < rows; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= cols) throw DataError("label out of range");
    const T* a = logits.data() + i * cols;
    const T mx = *std::max_element(a, a + cols);
    double lse = 0.0;
    for (std::size_t j = 0; j < cols; ++j) lse += std::exp(static_cast<double>(a[j] - mx));
    loss += std::log(lse) + static_cast<double>(mx) - static_cast<double>(a[labels[i]]);
  }
  if (grad) {
    *grad = std::move(probs);
    for (std::size_t i = 0; i < rows; ++i) (*grad)[i * cols + static_cast<std::size_t>(labels[i])] -= T(1);
    for (auto& v : grad->storage()) v /= static_cast<T>(rows);
  }
  return loss / static_cast<double>(rows);
}

template <class T>
double cross_entropy(const BasicTensor<T>& probs, std::span<const int> labels, BasicTensor<T>* grad) {
  const std::size_t cols = static_cast<std::size_t>(probs.dim(-1));
  const std::size_t rows = probs.size() / cols;
  if (labels.size() != rows) throw ShapeError("label count does not match batch");
  constexpr double floor = 1e-12;
  double loss = 0.0;
  if (grad) *grad = BasicTensor<T>(probs.shape());
  for (std::size_t i = 0; i < rows; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= cols) throw DataError("label out of range");
    const double p = std::max(static_cast<double>(probs[i * cols + static_cast<std::size_t>(labels[i])]), floor);
    loss -= std::log(p);
    if (grad) (*grad)[i * cols + static_cast<std::size_t>(labels[i])] = static_cast<T>(-1.0 / (p * rows));
  }
  return loss / static_cast<double>(rows);
}

int argmax_row(std::span<const float> row) {
  return static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
}

std::vector<int> argmax_rows(const Tensor& scores) {
  const std::size_t cols = static_cast<std::size_t>(scores.dim(-1));
  std::vector<int> out;
  for (std::size_t i = 0; i < scores.size() / cols; ++i)
    out.push_back(argmax_row(scores.values().subspan(i * cols, cols)));
  return out;
}

#define SCDET_INSTANTIATE(T)                                                                                     \
  template struct BasicNetwork<T>;                                                                               \
  template BasicTensor<T> forward(const BasicNetwork<T>&, const BasicTensor<T>&, const ForwardOptions&,          \
                                  BasicTape<T>*);                                                                \
  template BasicTensor<T> forward_logits(const BasicNetwork<T>&, const BasicTensor<T>&, const ForwardOptions&,   \
                                         BasicTape<T>*);                                                         \
  template BasicGradients<T> backward(const BasicNetwork<T>&, const BasicTape<T>&, const BasicTensor<T>&, bool); \
  template double softmax_cross_entropy(const BasicTensor<T>&, std::span<const int>, BasicTensor<T>*);           \
  template double cross_entropy(const BasicTensor<T>&, std::span<const int>, BasicTensor<T>*);

SCDET_INSTANTIATE(float)
SCDET_INSTANTIATE(double)
#undef SCDET_INSTANTIATE

template BasicNetwork<double> BasicNetwork<float>::cast<double>() const;
template BasicNetwork<float> BasicNetwork<double>::cast<float>() const;
template BasicNetwork<float> BasicNetwork<float>::cast<float>() const;

}  // namespace scdet
