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

#ifndef BCM_EVAL_HPP_
#define BCM_EVAL_HPP_

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bcm/datagen.hpp"
#include "bcm/metric.hpp"
#include "bcm/training.hpp"

namespace bcm {

struct MseCell {
  std::string model;
  std::string seed;  // a seed number or "mean"
  int length = 0;
  Category category = Category::kRegular;
  std::optional<double> mse;  // absent when the cell holds no examples
  long count = 0;
};

// MSE against adapted targets for every (length present in data) x category.
std::vector<MseCell> MseTable(const Dataset& data, std::span<const double> predictions,
                              const std::string& model, const std::string& seed);

// Averages matching (model, length, category) cells across seeds into a
// "mean" row. A cell absent for any seed stays absent.
std::vector<MseCell> MeanOverSeeds(const std::vector<MseCell>& cells);

// Columns: model,seed,length,category,mse,count; absent cells print "NA".
void WriteMseTable(const std::filesystem::path& path, const std::vector<MseCell>& cells);
std::vector<MseCell> ReadMseTable(const std::filesystem::path& path);

struct RankingMetrics {
  std::string name;
  std::string method;
  std::string bottleneck;
  std::string hyper;
  long n = 0;
  long n_exceptions = 0;
  std::optional<double> mean_position_regular;
  std::optional<double> mean_position_exception;
  // P(score of an exception > score of a regular), ties counting half.
  std::optional<double> auc;
  // Share of exceptions among the k highest-scoring examples, k = n_exceptions.
  std::optional<double> top_k_recall;
};

// `data` supplies the labels for the ranking's ids; every id must resolve.
RankingMetrics ComputeRankingMetrics(const Ranking& ranking, const Dataset& data, std::string name);

// Rank-sum AUC of `labels` against `scores`; nullopt if one class is empty.
std::optional<double> RankSumAuc(const std::vector<double>& scores, const std::vector<bool>& labels);
// O(N^2) pairwise count, used to check RankSumAuc.
std::optional<double> PairwiseAuc(const std::vector<double>& scores, const std::vector<bool>& labels);

void WriteRankingMetrics(const std::filesystem::path& path, const std::vector<RankingMetrics>& rows);
std::vector<RankingMetrics> ReadRankingMetrics(const std::filesystem::path& path);

}  // namespace bcm

#endif  // BCM_EVAL_HPP_
