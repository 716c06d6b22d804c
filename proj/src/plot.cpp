// Copyright 2026 The BCM Authors.
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

#include "bcm/plot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>

#include <fmt/format.h>

#include "bcm/errors.hpp"

namespace bcm::plot {
namespace {

constexpr int kPanelWidth = 420;
constexpr int kPanelHeight = 320;
constexpr int kTitleHeight = 36;
constexpr double kLeft = 62, kRight = 16, kTop = 30, kBottom = 48;

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2",
                                "#7f7f7f"};

std::string Escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

std::string Num(double v) { return fmt::format("{:.2f}", v); }

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  void Add(double v) {
    if (!std::isfinite(v)) return;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  bool empty() const { return lo > hi; }
  void Pad() {
    if (hi - lo < 1e-12) {
      lo -= 1;
      hi += 1;
    }
  }
};

void RenderPanel(std::string& svg, const Panel& panel, double ox, double oy) {
  const double w = kPanelWidth - kLeft - kRight;
  const double h = kPanelHeight - kTop - kBottom;
  Range xr, yr;
  for (const Series& s : panel.series) {
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if (std::isfinite(s.x[i]) && std::isfinite(s.y[i])) {
        xr.Add(s.x[i]);
        yr.Add(s.y[i]);
      }
    }
  }
  svg += fmt::format("<g transform=\"translate({},{})\">\n", Num(ox), Num(oy));
  svg += fmt::format("<text x=\"{}\" y=\"18\" text-anchor=\"middle\" font-size=\"13\">{}</text>\n",
                     Num(kLeft + w / 2), Escape(panel.title));
  svg += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#333\"/>\n", Num(kLeft),
                     Num(kTop), Num(w), Num(h));
  svg += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"11\">{}</text>\n",
                     Num(kLeft + w / 2), Num(kPanelHeight - 8), Escape(panel.x_label));
  svg += fmt::format(
      "<text x=\"14\" y=\"{}\" text-anchor=\"middle\" font-size=\"11\" transform=\"rotate(-90 14 {})\">{}</text>\n",
      Num(kTop + h / 2), Num(kTop + h / 2), Escape(panel.y_label));
  if (xr.empty()) {
    svg += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"14\" fill=\"#888\">no data</text>\n",
                       Num(kLeft + w / 2), Num(kTop + h / 2));
    svg += "</g>\n";
    return;
  }
  xr.Pad();
  yr.Pad();
  auto px = [&](double x) { return kLeft + (x - xr.lo) / (xr.hi - xr.lo) * w; };
  auto py = [&](double y) { return kTop + h - (y - yr.lo) / (yr.hi - yr.lo) * h; };
  for (int t = 0; t <= 4; ++t) {
    const double xv = xr.lo + (xr.hi - xr.lo) * t / 4.0;
    const double yv = yr.lo + (yr.hi - yr.lo) * t / 4.0;
    svg += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"10\">{:.3g}</text>\n", Num(px(xv)),
                       Num(kTop + h + 14), xv);
    svg += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-size=\"10\">{:.3g}</text>\n",
                       Num(kLeft - 4), Num(py(yv) + 3), yv);
    svg += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\" stroke=\"#eee\"/>\n", Num(kLeft),
                       Num(py(yv)), Num(kLeft + w));
  }
  double legend_y = kTop + 12;
  for (const Series& s : panel.series) {
    const std::size_t n = std::min(s.x.size(), s.y.size());
    if (s.scatter) {
      for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
        svg += fmt::format("<circle cx=\"{}\" cy=\"{}\" r=\"1.6\" fill=\"{}\" fill-opacity=\"0.6\"/>\n",
                           Num(px(s.x[i])), Num(py(s.y[i])), s.color);
      }
    } else {
      std::string points;
      for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
        points += fmt::format("{}{},{}", points.empty() ? "" : " ", Num(px(s.x[i])), Num(py(s.y[i])));
      }
      if (!points.empty()) {
        svg += fmt::format("<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\"/>\n", points,
                           s.color);
      }
    }
    if (n == 0) continue;
    svg += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"10\" height=\"10\" fill=\"{}\"/>\n", Num(kLeft + w - 120),
                       Num(legend_y - 9), s.color);
    svg += fmt::format("<text x=\"{}\" y=\"{}\" font-size=\"10\">{}</text>\n", Num(kLeft + w - 106), Num(legend_y),
                       Escape(s.label));
    legend_y += 14;
  }
  svg += "</g>\n";
}

}  // namespace

std::string RenderSvg(const std::string& title, const std::vector<Panel>& panels) {
  const int width = kPanelWidth * static_cast<int>(std::max<std::size_t>(panels.size(), 1));
  const int height = kPanelHeight + kTitleHeight;
  std::string svg = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" viewBox=\"0 0 {0} {1}\" "
      "font-family=\"sans-serif\">\n<rect width=\"{0}\" height=\"{1}\" fill=\"white\"/>\n",
      width, height);
  svg += fmt::format("<text x=\"{}\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">{}</text>\n", width / 2,
                     Escape(title));
  for (std::size_t i = 0; i < panels.size(); ++i) {
    RenderPanel(svg, panels[i], static_cast<double>(i) * kPanelWidth, kTitleHeight);
  }
  svg += "</svg>\n";
  return svg;
}

std::string DynamicsChart(const std::string& model, const DynamicsLog& log) {
  std::vector<Panel> panels;
  for (TargetSet t : {TargetSet::kCompositional, TargetSet::kAdapted}) {
    Panel p{.title = ToString(t) + " targets", .x_label = "epoch", .y_label = "MSE", .series = {}};
    int color = 0;
    for (Category c : {Category::kRegular, Category::kException}) {
      Series s{.label = ToString(c), .x = {}, .y = {}, .color = kPalette[color++], .scatter = false};
      for (const DynamicsRecord& r : log) {
        if (r.target_set == t && r.category == c) {
          s.x.push_back(r.epoch);
          s.y.push_back(r.mse);
        }
      }
      p.series.push_back(std::move(s));
    }
    panels.push_back(std::move(p));
  }
  return RenderSvg("training dynamics: " + model, panels);
}

std::string MseByLengthChart(const std::vector<MseCell>& cells) {
  std::vector<std::string> models;
  for (const MseCell& c : cells) {
    if (c.seed == "mean" && std::find(models.begin(), models.end(), c.model) == models.end()) models.push_back(c.model);
  }
  std::vector<Panel> panels;
  for (Category cat : {Category::kRegular, Category::kException}) {
    Panel p{.title = ToString(cat) + " examples", .x_label = "length", .y_label = "MSE (adapted targets)",
            .series = {}};
    for (std::size_t m = 0; m < models.size(); ++m) {
      Series s{.label = models[m], .x = {}, .y = {}, .color = kPalette[m % std::size(kPalette)], .scatter = false};
      for (const MseCell& c : cells) {
        if (c.seed == "mean" && c.model == models[m] && c.category == cat && c.mse) {
          s.x.push_back(c.length);
          s.y.push_back(*c.mse);
        }
      }
      p.series.push_back(std::move(s));
    }
    panels.push_back(std::move(p));
  }
  return RenderSvg("test MSE by length", panels);
}

std::string RankingChart(const std::string& name, const Ranking& ranking, const Dataset& data) {
  Series reg{.label = "regular", .x = {}, .y = {}, .color = kPalette[0], .scatter = true};
  Series exc{.label = "exception", .x = {}, .y = {}, .color = kPalette[1], .scatter = true};
  const double denom = ranking.size() > 1 ? static_cast<double>(ranking.size() - 1) : 1.0;
  for (std::size_t i = 0; i < ranking.size(); ++i) {
    const ExampleId id = ranking.ids[i];
    if (id < 0 || static_cast<std::size_t>(id) >= data.size()) {
      throw std::out_of_range(fmt::format("ranking '{}': id {} outside the dataset", name, id));
    }
    Series& s = data[static_cast<std::size_t>(id)].is_exception ? exc : reg;
    s.x.push_back(static_cast<double>(i) / denom);
    s.y.push_back(ranking.scores[i]);
  }
  Panel p{.title = name, .x_label = "normalized position", .y_label = "score", .series = {reg, exc}};
  return RenderSvg("ranking: " + name, {p});
}

void WriteSvg(const std::filesystem::path& path, const std::string& svg) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << svg;
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace bcm::plot
