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

#include "scdet/datasets.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>

#include "scdet/byteio.hpp"

namespace scdet {

namespace {

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;
constexpr int kCifarSide = 32;

}  // namespace

Dataset read_idx(const std::string& images_path, const std::string& labels_path, std::size_t limit) {
  const std::string img_bytes = byteio::read_file(images_path);
  const std::string lbl_bytes = byteio::read_file(labels_path);
  byteio::Reader img(img_bytes, images_path);
  byteio::Reader lbl(lbl_bytes, labels_path);
  if (img.u32_be() != kIdxImagesMagic) throw DataError(images_path + ": bad IDX image magic");
  if (lbl.u32_be() != kIdxLabelsMagic) throw DataError(labels_path + ": bad IDX label magic");
  std::size_t n = img.u32_be();
  const auto rows = img.u32_be(), cols = img.u32_be();
  if (rows != kImageSide || cols != kImageSide) throw DataError(images_path + ": expected 28x28 images");
  if (lbl.u32_be() != n) throw DataError("IDX image and label counts differ");
  if (limit) n = std::min(n, limit);
  Dataset d{Tensor({static_cast<int>(n), 1, kImageSide, kImageSide}), {}};
  const auto pixels = img.bytes(n * rows * cols);
  for (std::size_t i = 0; i < pixels.size(); ++i)
    d.inputs[i] = static_cast<float>(static_cast<unsigned char>(pixels[i])) / 255.f;
  const auto labels = lbl.bytes(n);
  for (char c : labels) d.labels.push_back(static_cast<unsigned char>(c));
  return d;
}

std::string encode_idx_images(const Tensor& images) {
  byteio::Writer w;
  const int n = images.dim(0), h = images.dim(-2), wd = images.dim(-1);
  w.u8(0);
  w.u8(0);
  w.u8(8);
  w.u8(3);
  for (int v : {n, h, wd}) {
    const auto u = static_cast<std::uint32_t>(v);
    for (int s = 24; s >= 0; s -= 8) w.u8(static_cast<std::uint8_t>(u >> s));
  }
  for (float v : images.values()) w.u8(static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.f, 1.f) * 255.f)));
  return w.data();
}

std::string encode_idx_labels(std::span<const int> labels) {
  byteio::Writer w;
  for (int b : {0, 0, 8, 1}) w.u8(static_cast<std::uint8_t>(b));
  const auto u = static_cast<std::uint32_t>(labels.size());
  for (int s = 24; s >= 0; s -= 8) w.u8(static_cast<std::uint8_t>(u >> s));
  for (int l : labels) w.u8(static_cast<std::uint8_t>(l));
  return w.data();
}

std::vector<float> resize_bilinear(std::span<const float> src, int src_h, int src_w, int dst_h, int dst_w) {
  std::vector<float> out(static_cast<std::size_t>(dst_h) * dst_w);
  const double sy = static_cast<double>(src_h) / dst_h, sx = static_cast<double>(src_w) / dst_w;
  for (int y = 0; y < dst_h; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(src_h - 1));
    const int y0 = static_cast<int>(fy), y1 = std::min(y0 + 1, src_h - 1);
    const double wy = fy - y0;
    for (int x = 0; x < dst_w; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(src_w - 1));
      const int x0 = static_cast<int>(fx), x1 = std::min(x0 + 1, src_w - 1);
      const double wx = fx - x0;
      const auto at = [&](int yy, int xx) { return static_cast<double>(src[static_cast<std::size_t>(yy) * src_w + xx]); };
      const double v = (1 - wy) * ((1 - wx) * at(y0, x0) + wx * at(y0, x1)) + wy * ((1 - wx) * at(y1, x0) + wx * at(y1, x1));
      out[static_cast<std::size_t>(y) * dst_w + x] = static_cast<float>(v);
    }
  }
  return out;
}

namespace {

std::vector<float> rgb_to_gray28(std::span<const float> rgb) {
  const std::size_t plane = static_cast<std::size_t>(kCifarSide) * kCifarSide;
  std::vector<float> gray(plane);
  for (std::size_t i = 0; i < plane; ++i)
    gray[i] = 0.299f * rgb[i] + 0.587f * rgb[plane + i] + 0.114f * rgb[2 * plane + i];
  auto out = resize_bilinear(gray, kCifarSide, kCifarSide, kImageSide, kImageSide);
  for (auto& v : out) v = std::clamp(v, 0.f, 1.f);
  return out;
}

}  // namespace

Dataset read_cifar_gray(const std::string& path, int label_bytes, std::size_t limit) {
  if (label_bytes != 1 && label_bytes != 2) throw ConfigError("CIFAR label byte count must be 1 or 2");
  const std::string bytes = byteio::read_file(path);
  const std::size_t record = static_cast<std::size_t>(label_bytes) + 3 * kCifarSide * kCifarSide;
  if (bytes.empty() || bytes.size() % record != 0) throw DataError(path + ": not a CIFAR binary batch");
  std::size_t n = bytes.size() / record;
  if (limit) n = std::min(n, limit);
  Dataset d{Tensor({static_cast<int>(n), 1, kImageSide, kImageSide}), {}};
  std::vector<float> rgb(3 * kCifarSide * kCifarSide);
  for (std::size_t i = 0; i < n; ++i) {
    const char* rec = bytes.data() + i * record;
    d.labels.push_back(static_cast<unsigned char>(rec[label_bytes - 1]));
    for (std::size_t k = 0; k < rgb.size(); ++k)
      rgb[k] = static_cast<float>(static_cast<unsigned char>(rec[label_bytes + k])) / 255.f;
    const auto g = rgb_to_gray28(rgb);
    std::copy(g.begin(), g.end(), d.inputs.data() + i * g.size());
  }
  return d;
}

std::string to_string(SyntheticFamily family) {
  switch (family) {
    case SyntheticFamily::Digits: return "digits";
    case SyntheticFamily::Fashion: return "fashion";
    case SyntheticFamily::Cifar10: return "cifar10";
    case SyntheticFamily::Cifar100: return "cifar100";
  }
  return "?";
}

namespace {

struct Pt {
  double x, y;
};
using Stroke = std::vector<Pt>;

std::vector<Pt> ellipse(double cx, double cy, double rx, double ry, int n = 16) {
  std::vector<Pt> p;
  for (int i = 0; i <= n; ++i) {
    const double a = 2 * std::numbers::pi * i / n;
    p.push_back({cx + rx * std::cos(a), cy + ry * std::sin(a)});
  }
  return p;
}

const std::array<std::vector<Stroke>, 10>& digit_strokes() {
  static const std::array<std::vector<Stroke>, 10> s = {{
      {ellipse(0.5, 0.5, 0.28, 0.4)},
      {{{0.5, 0.1}, {0.5, 0.9}}, {{0.33, 0.27}, {0.5, 0.1}}},
      {{{0.2, 0.28}, {0.5, 0.1}, {0.8, 0.28}, {0.22, 0.9}, {0.82, 0.9}}},
      {{{0.2, 0.12}, {0.8, 0.12}, {0.48, 0.48}, {0.8, 0.68}, {0.55, 0.9}, {0.2, 0.82}}},
      {{{0.68, 0.9}, {0.68, 0.1}, {0.18, 0.66}, {0.86, 0.66}}},
      {{{0.8, 0.1}, {0.26, 0.1}, {0.24, 0.46}, {0.74, 0.52}, {0.76, 0.84}, {0.2, 0.9}}},
      {{{0.7, 0.1}, {0.32, 0.5}, {0.26, 0.78}, {0.5, 0.92}, {0.74, 0.76}, {0.52, 0.56}, {0.3, 0.66}}},
      {{{0.18, 0.1}, {0.82, 0.1}, {0.4, 0.9}}},
      {ellipse(0.5, 0.3, 0.2, 0.2), ellipse(0.5, 0.7, 0.25, 0.21)},
      {ellipse(0.5, 0.32, 0.23, 0.22), {{0.73, 0.32}, {0.66, 0.9}}},
  }};
  return s;
}

double segment_distance(Pt p, Pt a, Pt b) {
  const double dx = b.x - a.x, dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0 ? ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double ex = a.x + t * dx - p.x, ey = a.y + t * dy - p.y;
  return std::sqrt(ex * ex + ey * ey);
}

// Random similarity transform mapping the unit glyph box into pixel space.
struct Placement {
  double scale, angle, cx, cy;
  Pt apply(Pt p, double box) const {
    const double u = (p.x - 0.5) * box * scale, v = (p.y - 0.5) * box * scale;
    return {cx + u * std::cos(angle) - v * std::sin(angle), cy + u * std::sin(angle) + v * std::cos(angle)};
  }
};

void render_digit(int cls, std::mt19937_64& rng, float* img) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Placement pl{0.9 + 0.2 * u(rng), (u(rng) - 0.5) * 0.3, 14.0 + (u(rng) - 0.5) * 3.0, 14.0 + (u(rng) - 0.5) * 3.0};
  const double thick = 1.0 + 0.7 * u(rng);
  std::vector<std::pair<Pt, Pt>> segs;
  for (const auto& stroke : digit_strokes()[static_cast<std::size_t>(cls)])
    for (std::size_t i = 1; i < stroke.size(); ++i)
      segs.emplace_back(pl.apply(stroke[i - 1], 20.0), pl.apply(stroke[i], 20.0));
  for (int y = 0; y < kImageSide; ++y)
    for (int x = 0; x < kImageSide; ++x) {
      double d = 1e9;
      for (const auto& [a, b] : segs) d = std::min(d, segment_distance({x + 0.5, y + 0.5}, a, b));
      const double v = std::clamp(1.0 - (d - thick) / 1.0, 0.0, 1.0);
      img[y * kImageSide + x] = static_cast<float>(v);
    }
}

bool inside_polygon(Pt p, const std::vector<Pt>& poly) {
  bool in = false;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    if (((poly[i].y > p.y) != (poly[j].y > p.y)) &&
        (p.x < (poly[j].x - poly[i].x) * (p.y - poly[i].y) / (poly[j].y - poly[i].y) + poly[i].x))
      in = !in;
  }
  return in;
}

const std::array<std::vector<std::vector<Pt>>, 10>& fashion_shapes() {
  static const std::array<std::vector<std::vector<Pt>>, 10> s = {{
      // t-shirt
      {{{0.3, 0.15}, {0.7, 0.15}, {0.95, 0.35}, {0.82, 0.45}, {0.72, 0.38}, {0.72, 0.9}, {0.28, 0.9}, {0.28, 0.38}, {0.18, 0.45}, {0.05, 0.35}}},
      // trouser
      {{{0.3, 0.08}, {0.7, 0.08}, {0.72, 0.92}, {0.56, 0.92}, {0.5, 0.35}, {0.44, 0.92}, {0.28, 0.92}}},
      // pullover
      {{{0.3, 0.12}, {0.7, 0.12}, {0.92, 0.3}, {0.95, 0.85}, {0.8, 0.85}, {0.75, 0.4}, {0.75, 0.9}, {0.25, 0.9}, {0.25, 0.4}, {0.2, 0.85}, {0.05, 0.85}, {0.08, 0.3}}},
      // dress
      {{{0.4, 0.08}, {0.6, 0.08}, {0.62, 0.35}, {0.85, 0.92}, {0.15, 0.92}, {0.38, 0.35}}},
      // coat
      {{{0.28, 0.1}, {0.72, 0.1}, {0.9, 0.25}, {0.92, 0.9}, {0.08, 0.9}, {0.1, 0.25}}},
      // sandal
      {{{0.05, 0.6}, {0.95, 0.55}, {0.95, 0.7}, {0.05, 0.75}}, {{0.2, 0.45}, {0.3, 0.45}, {0.3, 0.62}, {0.2, 0.62}}, {{0.6, 0.4}, {0.7, 0.4}, {0.7, 0.58}, {0.6, 0.58}}},
      // shirt
      {{{0.32, 0.1}, {0.68, 0.1}, {0.9, 0.28}, {0.86, 0.6}, {0.74, 0.58}, {0.74, 0.92}, {0.26, 0.92}, {0.26, 0.58}, {0.14, 0.6}, {0.1, 0.28}}},
      // sneaker
      {{{0.05, 0.5}, {0.45, 0.45}, {0.7, 0.3}, {0.95, 0.55}, {0.95, 0.72}, {0.05, 0.72}}},
      // bag
      {{{0.12, 0.35}, {0.88, 0.35}, {0.92, 0.9}, {0.08, 0.9}}, {{0.3, 0.12}, {0.7, 0.12}, {0.7, 0.35}, {0.62, 0.35}, {0.62, 0.2}, {0.38, 0.2}, {0.38, 0.35}, {0.3, 0.35}}},
      // ankle boot
      {{{0.4, 0.08}, {0.7, 0.08}, {0.7, 0.55}, {0.95, 0.7}, {0.95, 0.9}, {0.1, 0.9}, {0.15, 0.6}, {0.4, 0.55}}},
  }};
  return s;
}

void render_fashion(int cls, std::mt19937_64& rng, float* img) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Placement pl{0.85 + 0.2 * u(rng), (u(rng) - 0.5) * 0.12, 14.0 + (u(rng) - 0.5) * 2.0, 14.0 + (u(rng) - 0.5) * 2.0};
  std::vector<std::vector<Pt>> polys;
  for (const auto& poly : fashion_shapes()[static_cast<std::size_t>(cls)]) {
    std::vector<Pt> p;
    for (auto q : poly) p.push_back(pl.apply(q, 26.0));
    polys.push_back(std::move(p));
  }
  const double base = 0.45 + 0.4 * u(rng);
  const double freq = 0.6 + 1.2 * u(rng), phase = u(rng) * 6.28;
  std::normal_distribution<double> noise(0.0, 0.06);
  for (int y = 0; y < kImageSide; ++y)
    for (int x = 0; x < kImageSide; ++x) {
      bool in = false;
      for (const auto& p : polys) in = in || inside_polygon({x + 0.5, y + 0.5}, p);
      double v = 0.0;
      if (in) v = base + 0.12 * std::sin(freq * y + phase) + noise(rng);
      img[y * kImageSide + x] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
}

// Natural-image-like RGB scene: smooth two-color background, a class-shaped
// object and pixel noise. `busy` raises object count and texture strength.
void render_scene(int cls, bool busy, std::mt19937_64& rng, float* img) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const std::size_t plane = static_cast<std::size_t>(kCifarSide) * kCifarSide;
  std::vector<float> rgb(3 * plane);
  std::array<double, 3> c0{}, c1{};
  for (auto& c : c0) c = u(rng);
  for (auto& c : c1) c = u(rng);
  const double ang = u(rng) * 6.28;
  const double gx = std::cos(ang), gy = std::sin(ang);
  const int objects = busy ? 2 + static_cast<int>(u(rng) * 3) : 1;
  struct Obj {
    double cx, cy, r, aspect;
    std::array<double, 3> color;
    int shape;
  };
  std::vector<Obj> objs;
  for (int k = 0; k < objects; ++k) {
    Obj o{8 + 16 * u(rng), 8 + 16 * u(rng), (busy ? 3.0 : 6.0) + 6 * u(rng), 0.5 + u(rng), {}, (cls + k) % 5};
    for (auto& c : o.color) c = u(rng);
    objs.push_back(o);
  }
  std::normal_distribution<double> noise(0.0, busy ? 0.08 : 0.04);
  for (int y = 0; y < kCifarSide; ++y)
    for (int x = 0; x < kCifarSide; ++x) {
      const double t = std::clamp(0.5 + ((x - 16) * gx + (y - 16) * gy) / 32.0, 0.0, 1.0);
      std::array<double, 3> px{};
      for (int ch = 0; ch < 3; ++ch) px[ch] = (1 - t) * c0[ch] + t * c1[ch];
      for (const auto& o : objs) {
        const double dx = (x - o.cx) / o.r, dy = (y - o.cy) / (o.r * o.aspect);
        bool in = false;
        switch (o.shape) {
          case 0: in = dx * dx + dy * dy < 1; break;
          case 1: in = std::abs(dx) < 1 && std::abs(dy) < 1; break;
          case 2: in = dy > -1 && dy < 1 && std::abs(dx) < (1 - dy) / 2; break;
          case 3: in = std::abs(dx) + std::abs(dy) < 1; break;
          default: in = (std::abs(dx) < 1 && std::abs(dy) < 0.3) || (std::abs(dy) < 1 && std::abs(dx) < 0.3); break;
        }
        if (in)
          for (int ch = 0; ch < 3; ++ch) px[ch] = o.color[ch];
      }
      for (int ch = 0; ch < 3; ++ch)
        rgb[ch * plane + static_cast<std::size_t>(y) * kCifarSide + x] =
            static_cast<float>(std::clamp(px[ch] + noise(rng), 0.0, 1.0));
    }
  const auto g = rgb_to_gray28(rgb);
  std::copy(g.begin(), g.end(), img);
}

}  // namespace

Dataset synthetic_dataset(SyntheticFamily family, std::size_t count, std::uint64_t seed) {
  Dataset d{Tensor({static_cast<int>(std::max<std::size_t>(count, 1)), 1, kImageSide, kImageSide}), {}};
  if (count == 0) throw DataError("synthetic dataset needs at least one sample");
  std::mt19937_64 rng(seed ^ (0xD1B54A32D192ED03ULL * (static_cast<std::uint64_t>(family) + 1)));
  const std::size_t px = static_cast<std::size_t>(kImageSide) * kImageSide;
  const int classes = family == SyntheticFamily::Cifar100 ? 100 : 10;
  for (std::size_t i = 0; i < count; ++i) {
    const int cls = static_cast<int>(i % static_cast<std::size_t>(classes));
    float* img = d.inputs.data() + i * px;
    switch (family) {
      case SyntheticFamily::Digits: render_digit(cls, rng, img); break;
      case SyntheticFamily::Fashion: render_fashion(cls, rng, img); break;
      case SyntheticFamily::Cifar10: render_scene(cls, false, rng, img); break;
      case SyntheticFamily::Cifar100: render_scene(cls % 10, true, rng, img); break;
    }
    d.labels.push_back(cls);
  }
  return d;
}

}  // namespace scdet
