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

// Minimal static SVG charts. Output depends only on the inputs, so repeated
// runs produce identical bytes.

#ifndef BCM_PLOT_HPP_
#define BCM_PLOT_HPP_

#include <filesystem>
#include <string>
#include <vector>

#include "bcm/datagen.hpp"
#include "bcm/eval.hpp"
#include "bcm/metric.hpp"
#include "bcm/training.hpp"

namespace bcm::plot {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  std::string color = "#1f77b4";
  bool scatter = false;
};

struct Panel {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<Series> series;
};

// Panels side by side. A panel without points carries a "no data" note.
std::string RenderSvg(const std::string& title, const std::vector<Panel>& panels);

// Exception/regular MSE over training, one panel per target set.
std::string DynamicsChart(const std::string& model, const DynamicsLog& log);

// Mean-over-seeds MSE by length, one panel per category, one line per model.
std::string MseByLengthChart(const std::vector<MseCell>& cells);

// Score against normalized ranking position, regulars and exceptions apart.
std::string RankingChart(const std::string& name, const Ranking& ranking, const Dataset& data);

void WriteSvg(const std::filesystem::path& path, const std::string& svg);

}  // namespace bcm::plot

#endif  // BCM_PLOT_HPP_
