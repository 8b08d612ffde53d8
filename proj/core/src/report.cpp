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

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <sstream>

#include "json.hpp"
#include "scdet/byteio.hpp"
#include "scdet/checkpoint.hpp"
#include "scdet/harness.hpp"

namespace scdet {
namespace {

constexpr int kWidth = 640, kHeight = 360;
constexpr int kLeft = 60, kRight = 20, kTop = 40, kBottom = 50;
const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

std::string esc(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string num(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << v;
  return os.str();
}

struct Frame {
  double x0, x1, y0, y1;
  double px(double x) const { return kLeft + (x - x0) / (x1 - x0) * (kWidth - kLeft - kRight); }
  double py(double y) const { return kHeight - kBottom - (y - y0) / (y1 - y0) * (kHeight - kTop - kBottom); }
};

std::string open_svg(const std::string& title, int w = kWidth, int h = kHeight) {
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\" viewBox=\"0 0 " << w
     << ' ' << h << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<text x=\"" << w / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << esc(title) << "</text>\n";
  return os.str();
}

std::string axes(const Frame& f, const std::string& x_label, const std::string& y_label, bool x_ticks) {
  std::ostringstream os;
  const double bx = f.px(f.x0), by = f.py(f.y0);
  os << "<line x1=\"" << bx << "\" y1=\"" << by << "\" x2=\"" << f.px(f.x1) << "\" y2=\"" << by
     << "\" stroke=\"black\"/>\n<line x1=\"" << bx << "\" y1=\"" << by << "\" x2=\"" << bx << "\" y2=\"" << f.py(f.y1)
     << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double y = f.y0 + (f.y1 - f.y0) * i / 4;
    os << "<text x=\"" << bx - 6 << "\" y=\"" << f.py(y) + 4 << "\" text-anchor=\"end\">" << num(y) << "</text>\n";
  }
  if (x_ticks)
    for (int i = 0; i <= 5; ++i) {
      const double x = f.x0 + (f.x1 - f.x0) * i / 5;
      os << "<text x=\"" << f.px(x) << "\" y=\"" << by + 16 << "\" text-anchor=\"middle\">" << num(x) << "</text>\n";
    }
  os << "<text x=\"" << (kLeft + kWidth - kRight) / 2 << "\" y=\"" << kHeight - 10 << "\" text-anchor=\"middle\">"
     << esc(x_label) << "</text>\n<text transform=\"translate(16," << (kTop + kHeight - kBottom) / 2
     << ") rotate(-90)\" text-anchor=\"middle\">" << esc(y_label) << "</text>\n";
  return os.str();
}

std::string legend(std::span<const PlotSeries> series) {
  std::ostringstream os;
  for (std::size_t i = 0; i < series.size(); ++i) {
    const double y = kTop + 8 + 16.0 * static_cast<double>(i);
    os << "<rect x=\"" << kWidth - 150 << "\" y=\"" << y - 9 << "\" width=\"10\" height=\"10\" fill=\""
       << kPalette[i % 6] << "\"/><text x=\"" << kWidth - 135 << "\" y=\"" << y << "\">" << esc(series[i].label)
       << "</text>\n";
  }
  return os.str();
}

// Blue (0) to red (1) through white-ish yellow.
std::string heat(double v) {
  v = std::clamp(v, 0.0, 1.0);
  const int r = static_cast<int>(std::lround(255 * std::min(1.0, 2 * v)));
  const int b = static_cast<int>(std::lround(255 * std::min(1.0, 2 * (1 - v))));
  const int g = static_cast<int>(std::lround(200 * (1 - std::abs(2 * v - 1))));
  std::ostringstream os;
  os << '#' << std::hex << std::setfill('0') << std::setw(2) << r << std::setw(2) << g << std::setw(2) << b;
  return os.str();
}

}  // namespace

std::string svg_line_plot(const std::string& title, const std::string& x_label, const std::string& y_label,
                          std::span<const PlotSeries> series) {
  Frame f{0, 1, 0, 1};
  bool any = false;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!any) f = {s.x[i], s.x[i], std::min(0.0, s.y[i]), std::max(1.0, s.y[i])}, any = true;
      f.x0 = std::min(f.x0, s.x[i]);
      f.x1 = std::max(f.x1, s.x[i]);
      f.y0 = std::min(f.y0, s.y[i]);
      f.y1 = std::max(f.y1, s.y[i]);
    }
  if (f.x1 == f.x0) f.x1 = f.x0 + 1;
  std::string out = open_svg(title) + axes(f, x_label, y_label, true);
  for (std::size_t k = 0; k < series.size(); ++k) {
    std::ostringstream pts;
    for (std::size_t i = 0; i < series[k].x.size(); ++i) pts << num(f.px(series[k].x[i])) << ',' << num(f.py(series[k].y[i])) << ' ';
    out += "<polyline fill=\"none\" stroke-width=\"2\" stroke=\"" + std::string(kPalette[k % 6]) + "\" points=\"" +
           pts.str() + "\"/>\n";
  }
  return out + legend(series) + "</svg>\n";
}

std::string svg_bar_plot(const std::string& title, std::span<const std::string> labels,
                         std::span<const PlotSeries> series) {
  Frame f{0, static_cast<double>(std::max<std::size_t>(labels.size(), 1)), 0, 1};
  for (const auto& s : series)
    for (double y : s.y) f.y1 = std::max(f.y1, y);
  std::string out = open_svg(title) + axes(f, "", "value", false);
  const double group = f.px(1) - f.px(0);
  const double bar = 0.8 * group / static_cast<double>(std::max<std::size_t>(series.size(), 1));
  for (std::size_t k = 0; k < series.size(); ++k)
    for (std::size_t i = 0; i < series[k].y.size(); ++i) {
      const double x = f.px(series[k].x[i]) + 0.1 * group + bar * static_cast<double>(k);
      const double y = f.py(series[k].y[i]);
      out += "<rect x=\"" + num(x) + "\" y=\"" + num(y) + "\" width=\"" + num(bar) + "\" height=\"" +
             num(f.py(0) - y) + "\" fill=\"" + kPalette[k % 6] + "\"/>\n";
    }
  for (std::size_t i = 0; i < labels.size(); ++i)
    out += "<text x=\"" + num(f.px(static_cast<double>(i) + 0.5)) + "\" y=\"" + num(f.py(0) + 16) +
           "\" text-anchor=\"middle\">" + esc(labels[i]) + "</text>\n";
  return out + legend(series) + "</svg>\n";
}

std::string cam_svg(std::span<const CamPanel> panels) {
  constexpr int panel_h = 150, width = 800, left = 20, right = 20;
  const int height = 40 + panel_h * static_cast<int>(panels.size());
  std::string out = open_svg("Class activation maps", width, height);
  for (std::size_t p = 0; p < panels.size(); ++p) {
    const auto& panel = panels[p];
    const int top = 40 + panel_h * static_cast<int>(p);
    const int rows = panel.matrix.dim(0), cols = panel.matrix.dim(1);
    // Mean over the stacked rows; each column shares one importance value.
    std::vector<double> curve(static_cast<std::size_t>(cols), 0.0);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) curve[static_cast<std::size_t>(c)] += panel.matrix.data()[r * cols + c] / rows;
    const auto [lo_it, hi_it] = std::minmax_element(curve.begin(), curve.end());
    const double lo = *lo_it, span = std::max(*hi_it - lo, 1e-12);
    auto px = [&](int c) { return left + (width - left - right) * (c + 0.5) / cols; };
    auto py = [&](double v) { return top + 25 + (panel_h - 40) * (1 - (v - lo) / span); };
    const std::string title = panel.title + (panel.cam.all_zero ? " (all-zero CAM)" : "");
    out += "<text x=\"" + std::to_string(left) + "\" y=\"" + std::to_string(top + 14) + "\">" + esc(title) + "</text>\n";
    // Heat strip under the curve, then the curve itself in segment colors.
    for (int c = 0; c < cols; ++c) {
      const std::string color =
          panel.cam.all_zero ? "#cccccc" : heat(panel.cam.importance[static_cast<std::size_t>(c)]);
      out += "<rect x=\"" + num(px(c) - 0.5 * (width - left - right) / cols) + "\" y=\"" +
             std::to_string(top + panel_h - 12) + "\" width=\"" + num(double(width - left - right) / cols + 0.2) +
             "\" height=\"8\" fill=\"" + color + "\"/>\n";
      if (c + 1 < cols)
        out += "<line x1=\"" + num(px(c)) + "\" y1=\"" + num(py(curve[static_cast<std::size_t>(c)])) + "\" x2=\"" +
               num(px(c + 1)) + "\" y2=\"" + num(py(curve[static_cast<std::size_t>(c) + 1])) +
               "\" stroke-width=\"2\" stroke=\"" + (panel.cam.all_zero ? std::string("#888888") : color) + "\"/>\n";
    }
  }
  return out + "</svg>\n";
}

std::string manifest_json(const Manifest& m) {
  nlohmann::ordered_json j;
  j["recipe"] = m.recipe;
  j["config_sha1"] = m.config_sha1;
  j["seed"] = m.seed;
  j["version"] = "scdet 0.1.0";
  j["modules"] = {{"checkpoint_format", kCheckpointVersion}, {"trace_format", kTraceVersion}};
  if (!m.config.empty()) j["config"] = m.config;
  auto& stages = j["stages"] = nlohmann::ordered_json::array();
  for (const auto& t : m.timings) stages.push_back({{"stage", t.stage}, {"seconds", t.seconds}});
  auto& outputs = j["outputs"] = nlohmann::ordered_json::array();
  for (const auto& path : m.outputs) {
    const std::string body = byteio::read_file(path);
    outputs.push_back({{"path", path}, {"bytes", body.size()}, {"sha1", sha1_hex(body)},
                       {"git_blob_sha1", sha1_hex("blob " + std::to_string(body.size()) + '\0' + body)},
                       {"config_sha1", m.config_sha1}});
  }
  return j.dump(2) + "\n";
}

}  // namespace scdet
