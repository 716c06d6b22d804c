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

#include "bcm/eval.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

#include <fmt/format.h>

#include "bcm/errors.hpp"

namespace bcm {
namespace {

std::vector<std::string> SplitCsv(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ls(line);
  while (std::getline(ls, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string OptionalField(const std::optional<double>& v) { return v ? fmt::format("{:.17g}", *v) : "NA"; }

std::optional<double> ParseOptional(const std::string& s) {
  if (s == "NA") return std::nullopt;
  return std::stod(s);
}

Category ParseCategory(const std::string& s) {
  if (s == "regular") return Category::kRegular;
  if (s == "exception") return Category::kException;
  throw std::invalid_argument("unknown category '" + s + "'");
}

}  // namespace

std::vector<MseCell> MseTable(const Dataset& data, std::span<const double> predictions, const std::string& model,
                              const std::string& seed) {
  if (predictions.size() != data.size()) {
    throw DimensionError(fmt::format("mse table: {} predictions for {} examples", predictions.size(), data.size()));
  }
  std::set<int> lengths;
  std::map<std::pair<int, bool>, std::pair<double, long>> acc;
  for (std::size_t i = 0; i < data.size(); ++i) {
    lengths.insert(data[i].length);
    const double e = predictions[i] - data[i].adapted_value;
    auto& [sum, n] = acc[{data[i].length, data[i].is_exception}];
    sum += e * e;
    ++n;
  }
  std::vector<MseCell> cells;
  for (int len : lengths) {
    for (bool exc : {false, true}) {
      MseCell c{.model = model, .seed = seed, .length = len,
                .category = exc ? Category::kException : Category::kRegular, .mse = std::nullopt, .count = 0};
      auto it = acc.find({len, exc});
      if (it != acc.end() && it->second.second > 0) {
        c.count = it->second.second;
        c.mse = it->second.first / static_cast<double>(c.count);
      }
      cells.push_back(c);
    }
  }
  return cells;
}

std::vector<MseCell> MeanOverSeeds(const std::vector<MseCell>& cells) {
  using Key = std::tuple<std::string, int, int>;
  struct Acc {
    double sum = 0;
    int seeds = 0;
    bool absent = false;
    long count = 0;
  };
  std::map<Key, Acc> acc;
  std::vector<Key> order;
  for (const MseCell& c : cells) {
    if (c.seed == "mean") continue;
    const Key key{c.model, c.length, static_cast<int>(c.category)};
    auto [it, fresh] = acc.try_emplace(key);
    if (fresh) order.push_back(key);
    ++it->second.seeds;
    it->second.count += c.count;
    if (c.mse) {
      it->second.sum += *c.mse;
    } else {
      it->second.absent = true;
    }
  }
  std::vector<MseCell> out;
  for (const Key& key : order) {
    const Acc& a = acc[key];
    MseCell c{.model = std::get<0>(key), .seed = "mean", .length = std::get<1>(key),
              .category = static_cast<Category>(std::get<2>(key)), .mse = std::nullopt, .count = a.count};
    if (!a.absent) c.mse = a.sum / a.seeds;
    out.push_back(c);
  }
  return out;
}

void WriteMseTable(const std::filesystem::path& path, const std::vector<MseCell>& cells) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "model,seed,length,category,mse,count\n";
  for (const MseCell& c : cells) {
    out << fmt::format("{},{},{},{},{},{}\n", c.model, c.seed, c.length, ToString(c.category), OptionalField(c.mse),
                       c.count);
  }
  if (!out) throw IoError("write failed for " + path.string());
}

std::vector<MseCell> ReadMseTable(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open mse table " + path.string());
  std::string line;
  long line_no = 0;
  std::vector<MseCell> cells;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 || line.empty()) continue;
    const auto f = SplitCsv(line);
    if (f.size() != 6) throw FormatError(fmt::format("{}: row {} needs 6 columns", path.string(), line_no), line_no);
    try {
      cells.push_back({.model = f[0], .seed = f[1], .length = std::stoi(f[2]), .category = ParseCategory(f[3]),
                       .mse = ParseOptional(f[4]), .count = std::stol(f[5])});
    } catch (const std::invalid_argument& e) {
      throw FormatError(fmt::format("{}: row {}: {}", path.string(), line_no, e.what()), line_no);
    }
  }
  return cells;
}

std::optional<double> RankSumAuc(const std::vector<double>& scores, const std::vector<bool>& labels) {
  if (scores.size() != labels.size()) throw DimensionError("auc: scores and labels differ in length");
  const std::vector<double> ranks = AverageRanks(scores);
  double pos_rank_sum = 0;
  double n_pos = 0;
  for (std::size_t i = 0; i < ranks.size(); ++i) {
    if (labels[i]) {
      pos_rank_sum += ranks[i];
      n_pos += 1;
    }
  }
  const double n_neg = static_cast<double>(labels.size()) - n_pos;
  if (n_pos == 0 || n_neg == 0) return std::nullopt;
  return (pos_rank_sum - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg);
}

std::optional<double> PairwiseAuc(const std::vector<double>& scores, const std::vector<bool>& labels) {
  if (scores.size() != labels.size()) throw DimensionError("auc: scores and labels differ in length");
  double wins = 0;
  double pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!labels[i]) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j]) continue;
      pairs += 1;
      if (scores[i] > scores[j]) wins += 1;
      if (scores[i] == scores[j]) wins += 0.5;
    }
  }
  if (pairs == 0) return std::nullopt;
  return wins / pairs;
}

RankingMetrics ComputeRankingMetrics(const Ranking& ranking, const Dataset& data, std::string name) {
  RankingMetrics m{.name = std::move(name), .method = ranking.method, .bottleneck = ranking.bottleneck,
                   .hyper = ranking.hyper, .n = static_cast<long>(ranking.size()), .n_exceptions = 0,
                   .mean_position_regular = std::nullopt, .mean_position_exception = std::nullopt,
                   .auc = std::nullopt, .top_k_recall = std::nullopt};
  if (ranking.ids.size() != ranking.scores.size()) throw DimensionError("ranking ids and scores differ in length");
  std::vector<bool> labels(ranking.size());
  std::vector<bool> seen(data.size(), false);
  for (std::size_t i = 0; i < ranking.size(); ++i) {
    const ExampleId id = ranking.ids[i];
    if (id < 0 || static_cast<std::size_t>(id) >= data.size() || seen[static_cast<std::size_t>(id)]) {
      throw std::invalid_argument(fmt::format("ranking '{}': id {} does not match the labeled set", m.name, id));
    }
    seen[static_cast<std::size_t>(id)] = true;
    labels[i] = data[static_cast<std::size_t>(id)].is_exception;
  }
  if (m.n == 0) return m;
  const double denom = m.n > 1 ? static_cast<double>(m.n - 1) : 1.0;
  double sum_reg = 0, sum_exc = 0;
  long n_reg = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double pos = static_cast<double>(i) / denom;
    if (labels[i]) {
      sum_exc += pos;
      ++m.n_exceptions;
    } else {
      sum_reg += pos;
      ++n_reg;
    }
  }
  if (n_reg > 0) m.mean_position_regular = sum_reg / static_cast<double>(n_reg);
  if (m.n_exceptions > 0) m.mean_position_exception = sum_exc / static_cast<double>(m.n_exceptions);
  m.auc = RankSumAuc(ranking.scores, labels);
  if (m.n_exceptions > 0) {
    // The ranking is ascending, so the highest scores sit at the tail.
    long hits = 0;
    for (std::size_t i = labels.size() - static_cast<std::size_t>(m.n_exceptions); i < labels.size(); ++i) {
      hits += labels[i] ? 1 : 0;
    }
    m.top_k_recall = static_cast<double>(hits) / static_cast<double>(m.n_exceptions);
  }
  return m;
}

void WriteRankingMetrics(const std::filesystem::path& path, const std::vector<RankingMetrics>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "name,method,bottleneck,hyper,n,n_exceptions,mean_position_regular,mean_position_exception,auc,"
         "top_k_recall\n";
  for (const RankingMetrics& m : rows) {
    out << fmt::format("{},{},{},{},{},{},{},{},{},{}\n", m.name, m.method, m.bottleneck, m.hyper, m.n,
                       m.n_exceptions, OptionalField(m.mean_position_regular),
                       OptionalField(m.mean_position_exception), OptionalField(m.auc), OptionalField(m.top_k_recall));
  }
  if (!out) throw IoError("write failed for " + path.string());
}

std::vector<RankingMetrics> ReadRankingMetrics(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open ranking metrics " + path.string());
  std::string line;
  long line_no = 0;
  std::vector<RankingMetrics> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 || line.empty()) continue;
    const auto f = SplitCsv(line);
    if (f.size() != 10) {
      throw FormatError(fmt::format("{}: row {} needs 10 columns", path.string(), line_no), line_no);
    }
    try {
      rows.push_back({.name = f[0], .method = f[1], .bottleneck = f[2], .hyper = f[3], .n = std::stol(f[4]),
                      .n_exceptions = std::stol(f[5]), .mean_position_regular = ParseOptional(f[6]),
                      .mean_position_exception = ParseOptional(f[7]), .auc = ParseOptional(f[8]),
                      .top_k_recall = ParseOptional(f[9])});
    } catch (const std::invalid_argument& e) {
      throw FormatError(fmt::format("{}: row {}: {}", path.string(), line_no, e.what()), line_no);
    }
  }
  return rows;
}

}  // namespace bcm
