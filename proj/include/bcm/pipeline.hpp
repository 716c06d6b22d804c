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

// Experiment stages. Each stage reads the artifacts of the previous one from
// the output directory and rewrites its own outputs in full:
//
//   data/{train,valid,test}.tsv
//   models/<model>/seed<k>/{model.ckpt,dynamics.csv}     model: base, <variant>, tt-<variant>
//   models/tt-<variant>/seed<k>/residuals.csv
//   reps/<model>/seed<k>.rep
//   rankings/<method>_<variant>.csv, rankings/tis.csv, rankings/per-seed/...
//   eval/{mse_table.csv,ranking_metrics.csv,report.json}, eval/spearman/report.json
//   plots/*.svg
//   manifest.tsv

#ifndef BCM_PIPELINE_HPP_
#define BCM_PIPELINE_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "bcm/config.hpp"

namespace bcm {

class Layout {
 public:
  explicit Layout(std::filesystem::path root) : root_(std::move(root)) {}

  const std::filesystem::path& root() const { return root_; }
  std::filesystem::path data(const std::string& split) const { return root_ / "data" / (split + ".tsv"); }
  std::filesystem::path model_dir(const std::string& model, std::uint64_t seed) const;
  std::filesystem::path checkpoint(const std::string& model, std::uint64_t seed) const {
    return model_dir(model, seed) / "model.ckpt";
  }
  std::filesystem::path dynamics(const std::string& model, std::uint64_t seed) const {
    return model_dir(model, seed) / "dynamics.csv";
  }
  std::filesystem::path residuals(const std::string& variant, std::uint64_t seed) const {
    return model_dir("tt-" + variant, seed) / "residuals.csv";
  }
  std::filesystem::path rep(const std::string& model, std::uint64_t seed) const;
  std::filesystem::path ranking(const std::string& name) const { return root_ / "rankings" / (name + ".csv"); }
  std::filesystem::path seed_ranking(const std::string& name, std::uint64_t seed) const;
  std::filesystem::path eval(const std::string& file) const { return root_ / "eval" / file; }
  std::filesystem::path plot(const std::string& name) const { return root_ / "plots" / (name + ".svg"); }
  std::filesystem::path manifest() const { return root_ / "manifest.tsv"; }

 private:
  std::filesystem::path root_;
};

struct RunOptions {
  // Worker pool size across independent jobs; <= 0 uses every core.
  int threads = 0;
  std::function<void(const std::string&)> log;
};

// Ranking names: "bcm-pp_<variant>", "bcm-tt_<variant>", "tis".
std::string RankingName(const std::string& method, const std::string& variant);

void RunGen(const ExperimentConfig& config, const RunOptions& options);
void RunTrain(const ExperimentConfig& config, const RunOptions& options);
void RunExtract(const ExperimentConfig& config, const RunOptions& options);
void RunRank(const ExperimentConfig& config, const RunOptions& options);
void RunEval(const ExperimentConfig& config, const RunOptions& options);
void RunPlot(const ExperimentConfig& config, const RunOptions& options);
void RunAll(const ExperimentConfig& config, const RunOptions& options);

// Tab separated path (relative, '/'-joined), sha256 hex, size in bytes; every
// regular file under the root except the manifest itself, sorted by path.
void WriteManifest(const std::filesystem::path& root);
std::string Sha256Hex(const std::filesystem::path& file);

// Seed-averaged dynamics: records sharing (epoch, target set, category).
DynamicsLog AverageDynamics(const std::vector<DynamicsLog>& logs);

}  // namespace bcm

#endif  // BCM_PIPELINE_HPP_
