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

// Compositionality scores from paired base/bottleneck models: representation
// extraction, CCA alignment with cosine distances, residual-based scores,
// seed merging and ranking, plus the tree impurity baseline.

#ifndef BCM_METRIC_HPP_
#define BCM_METRIC_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bcm/datagen.hpp"
#include "bcm/kernels.hpp"
#include "bcm/treelstm.hpp"

namespace bcm {

using ExampleId = std::int64_t;

struct RepresentationMatrix {
  std::vector<ExampleId> ids;
  std::uint64_t seed = 0;
  std::string tag;  // "base" or a bottleneck variant name
  Eigen::MatrixXd values;  // ids.size() x dim

  void Validate() const;
};

// Penultimate activations (inference mode) for every example; ids are the
// dataset positions.
RepresentationMatrix Extract(const ModelConfig& config, const ad::ParamStore<float>& params,
                             const Dataset& data, std::uint64_t seed, std::string tag,
                             kernels::Execution exec = kernels::Execution::kParallel);

// Binary layout:
//   BCMREP 1\nseed <s>\ntag <t>\nrows <n>\ncols <d>\n
//   <n lines of example ids>
//   data\n<n*d little-endian float64, row-major>
void WriteRepresentation(const std::filesystem::path& path, const RepresentationMatrix& m);
RepresentationMatrix ReadRepresentation(const std::filesystem::path& path);

struct CcaResult {
  Eigen::MatrixXd w;  // dA x k, maps centered A rows to canonical variates
  Eigen::MatrixXd v;  // dB x k
  Eigen::VectorXd correlations;  // non-increasing, in [0, 1]
  Eigen::RowVectorXd mean_a;
  Eigen::RowVectorXd mean_b;
};

// Ridge added to each view covariance is reg * trace(C) / dim. Rows are
// examples. k <= 0 means min(dA, dB). With reg == 0 a rank-deficient view
// raises NumericError.
CcaResult CcaFit(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, int k, double reg);

// 1 - cos(x, y). A zero-norm side scores 1 and bumps `zero_norm`.
double CosineDistance(const Eigen::VectorXd& x, const Eigen::VectorXd& y, long* zero_norm = nullptr);

struct ScoreList {
  std::vector<ExampleId> ids;
  std::vector<double> scores;
  std::uint64_t seed = 0;
};

struct PpOptions {
  int k = 0;  // all directions
  double reg = 1e-4;
};

// Cosine distance between each example's CCA-projected base and bottleneck
// vectors. CCA is fitted on the same rows it scores.
ScoreList BcmPpScores(const RepresentationMatrix& base, const RepresentationMatrix& bottleneck,
                      const PpOptions& options, long* zero_norm = nullptr);

struct Ranking {
  // Ascending score: most compositional first. Ties broken by id.
  std::vector<ExampleId> ids;
  std::vector<double> scores;
  std::string method;      // bcm-pp | bcm-tt | tis
  std::string bottleneck;  // variant name, empty for tis
  std::string hyper;       // e.g. "beta=0.25"
  std::vector<std::uint64_t> seeds;

  std::size_t size() const { return ids.size(); }
};

// Averages per-seed scores and sorts ascending.
Ranking MergeAndRank(const std::vector<ScoreList>& per_seed);

// |root value - mean of all node values| under ordinary arithmetic.
double TreeImpurityScore(const ExprTree& tree);
Ranking TreeImpurityRanking(const Dataset& data);

// Spearman correlation of the two rankings' scores over the shared ids, with
// average ranks for ties.
double RankCorrelation(const Ranking& a, const Ranking& b);

// Average (1-based) ranks with ties sharing the mean rank.
std::vector<double> AverageRanks(const std::vector<double>& values);

// Columns: rank,example_id,score,is_exception,length,text preceded by a
// `# method=... bottleneck=... hyper=... seeds=1;2` line.
void WriteRankingCsv(const std::filesystem::path& path, const Ranking& ranking, const Dataset& data);
Ranking ReadRankingCsv(const std::filesystem::path& path);

}  // namespace bcm

#endif  // BCM_METRIC_HPP_
