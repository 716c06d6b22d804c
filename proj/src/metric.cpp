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

#include "bcm/metric.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <fmt/format.h>
#include <fmt/ranges.h>

#include "bcm/training.hpp"

namespace bcm {

void RepresentationMatrix::Validate() const {
  if (static_cast<Eigen::Index>(ids.size()) != values.rows()) {
    throw DimensionError(fmt::format("representation has {} ids for {} rows", ids.size(), values.rows()));
  }
  if (!values.allFinite()) throw NumericError("representation contains non-finite entries");
}

RepresentationMatrix Extract(const ModelConfig& config, const ad::ParamStore<float>& params, const Dataset& data,
                             std::uint64_t seed, std::string tag, kernels::Execution exec) {
  const Predictions preds = Predict(config, params, data, true, exec);
  RepresentationMatrix m;
  m.seed = seed;
  m.tag = std::move(tag);
  m.ids.resize(data.size());
  std::iota(m.ids.begin(), m.ids.end(), ExampleId{0});
  const Eigen::Index dim = preds.penult_dim;
  m.values.resize(static_cast<Eigen::Index>(data.size()), dim);
  for (Eigen::Index i = 0; i < m.values.rows(); ++i) {
    for (Eigen::Index k = 0; k < dim; ++k) m.values(i, k) = preds.penult[static_cast<std::size_t>(i * dim + k)];
  }
  m.Validate();
  return m;
}

void WriteRepresentation(const std::filesystem::path& path, const RepresentationMatrix& m) {
  m.Validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "BCMREP 1\nseed " << m.seed << "\ntag " << m.tag << "\nrows " << m.values.rows() << "\ncols "
      << m.values.cols() << '\n';
  for (ExampleId id : m.ids) out << id << '\n';
  out << "data\n";
  std::vector<double> row(static_cast<std::size_t>(m.values.cols()));
  for (Eigen::Index i = 0; i < m.values.rows(); ++i) {
    for (Eigen::Index k = 0; k < m.values.cols(); ++k) row[static_cast<std::size_t>(k)] = m.values(i, k);
    out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size() * sizeof(double)));
  }
  if (!out) throw IoError("write failed for " + path.string());
}

RepresentationMatrix ReadRepresentation(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open representation file " + path.string());
  auto fail = [&](const std::string& what) { return IoError("malformed representation " + path.string() + ": " + what); };
  std::string line;
  if (!std::getline(in, line) || line != "BCMREP 1") throw fail("bad magic");
  RepresentationMatrix m;
  long rows = 0, cols = 0;
  auto read_field = [&](const char* key, auto& value) {
    if (!std::getline(in, line)) throw fail(std::string("missing ") + key);
    std::istringstream ls(line);
    std::string k;
    if (!(ls >> k) || k != key) throw fail(std::string("expected ") + key);
    if constexpr (std::is_same_v<std::decay_t<decltype(value)>, std::string>) {
      std::getline(ls >> std::ws, value);
    } else if (!(ls >> value)) {
      throw fail(std::string("bad ") + key);
    }
  };
  read_field("seed", m.seed);
  read_field("tag", m.tag);
  read_field("rows", rows);
  read_field("cols", cols);
  if (rows < 0 || cols < 0) throw fail("negative dimensions");
  m.ids.resize(static_cast<std::size_t>(rows));
  for (ExampleId& id : m.ids) {
    if (!std::getline(in, line)) throw fail("truncated id list");
    try {
      id = std::stoll(line);
    } catch (const std::exception&) {
      throw fail("bad id '" + line + "'");
    }
  }
  if (!std::getline(in, line) || line != "data") throw fail("missing data marker");
  m.values.resize(rows, cols);
  std::vector<double> row(static_cast<std::size_t>(cols));
  for (long i = 0; i < rows; ++i) {
    in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size() * sizeof(double)));
    if (static_cast<std::size_t>(in.gcount()) != row.size() * sizeof(double)) throw fail("truncated payload");
    for (long k = 0; k < cols; ++k) m.values(i, k) = row[static_cast<std::size_t>(k)];
  }
  m.Validate();
  return m;
}

namespace {

Eigen::MatrixXd InverseSqrt(const Eigen::MatrixXd& cov, double reg, const char* view) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success) throw NumericError(std::string("eigendecomposition failed for view ") + view);
  const Eigen::VectorXd values = eig.eigenvalues();
  const double largest = std::max(values.maxCoeff(), 0.0);
  const double smallest = values.minCoeff();
  if (!(smallest > 1e-12 * std::max(largest, 1e-300))) {
    throw NumericError(fmt::format(
        "covariance of view {} is rank deficient (smallest eigenvalue {:.3g}, reg {}); use a ridge reg > 0",
        view, smallest, reg));
  }
  return eig.eigenvectors() * values.cwiseInverse().cwiseSqrt().asDiagonal() * eig.eigenvectors().transpose();
}

}  // namespace

CcaResult CcaFit(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, int k, double reg) {
  if (a.rows() != b.rows()) {
    throw DimensionError(fmt::format("cca: views have {} and {} rows", a.rows(), b.rows()));
  }
  if (a.rows() < 2) throw DimensionError("cca: need at least two examples");
  if (reg < 0.0) throw std::invalid_argument("cca: reg must be >= 0");
  const int max_k = static_cast<int>(std::min(a.cols(), b.cols()));
  if (k <= 0) k = max_k;
  if (k > max_k) throw DimensionError(fmt::format("cca: k = {} exceeds min(dA, dB) = {}", k, max_k));

  CcaResult out;
  out.mean_a = a.colwise().mean();
  out.mean_b = b.colwise().mean();
  const Eigen::MatrixXd ac = a.rowwise() - out.mean_a;
  const Eigen::MatrixXd bc = b.rowwise() - out.mean_b;
  const double denom = static_cast<double>(a.rows() - 1);
  Eigen::MatrixXd caa = (ac.transpose() * ac) / denom;
  Eigen::MatrixXd cbb = (bc.transpose() * bc) / denom;
  const Eigen::MatrixXd cab = (ac.transpose() * bc) / denom;
  if (reg > 0.0) {
    caa.diagonal().array() += reg * std::max(caa.trace() / static_cast<double>(caa.rows()), 1e-12);
    cbb.diagonal().array() += reg * std::max(cbb.trace() / static_cast<double>(cbb.rows()), 1e-12);
  }
  const Eigen::MatrixXd wa = InverseSqrt(caa, reg, "A");
  const Eigen::MatrixXd wb = InverseSqrt(cbb, reg, "B");
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(wa * cab * wb, Eigen::ComputeThinU | Eigen::ComputeThinV);
  out.correlations = svd.singularValues().head(k).cwiseMin(1.0).cwiseMax(0.0);
  out.w = wa * svd.matrixU().leftCols(k);
  out.v = wb * svd.matrixV().leftCols(k);
  return out;
}

double CosineDistance(const Eigen::VectorXd& x, const Eigen::VectorXd& y, long* zero_norm) {
  const double nx = x.norm();
  const double ny = y.norm();
  if (nx == 0.0 || ny == 0.0) {
    if (zero_norm != nullptr) ++*zero_norm;
    return 1.0;
  }
  return std::clamp(1.0 - x.dot(y) / (nx * ny), 0.0, 2.0);
}

ScoreList BcmPpScores(const RepresentationMatrix& base, const RepresentationMatrix& bottleneck,
                      const PpOptions& options, long* zero_norm) {
  base.Validate();
  bottleneck.Validate();
  if (base.ids != bottleneck.ids) throw DimensionError("bcm-pp: base and bottleneck rows are not aligned");
  const CcaResult cca = CcaFit(base.values, bottleneck.values, options.k, options.reg);
  const Eigen::MatrixXd pa = (base.values.rowwise() - cca.mean_a) * cca.w;
  const Eigen::MatrixXd pb = (bottleneck.values.rowwise() - cca.mean_b) * cca.v;
  ScoreList out;
  out.ids = base.ids;
  out.seed = base.seed;
  out.scores.resize(base.ids.size());
  for (Eigen::Index i = 0; i < pa.rows(); ++i) {
    out.scores[static_cast<std::size_t>(i)] = CosineDistance(pa.row(i).transpose(), pb.row(i).transpose(), zero_norm);
  }
  return out;
}

namespace {

Ranking SortRanking(std::vector<ExampleId> ids, std::vector<double> scores) {
  std::vector<std::size_t> order(ids.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    if (scores[x] != scores[y]) return scores[x] < scores[y];
    return ids[x] < ids[y];
  });
  Ranking r;
  r.ids.reserve(ids.size());
  r.scores.reserve(ids.size());
  for (std::size_t i : order) {
    r.ids.push_back(ids[i]);
    r.scores.push_back(scores[i]);
  }
  return r;
}

}  // namespace

Ranking MergeAndRank(const std::vector<ScoreList>& per_seed) {
  if (per_seed.empty()) throw std::invalid_argument("merge_and_rank: no score lists");
  const ScoreList& first = per_seed.front();
  if (first.ids.size() != first.scores.size()) throw DimensionError("merge_and_rank: ids and scores differ in length");
  std::unordered_map<ExampleId, std::size_t> position;
  for (std::size_t i = 0; i < first.ids.size(); ++i) {
    if (!position.emplace(first.ids[i], i).second) {
      throw std::invalid_argument(fmt::format("merge_and_rank: duplicate id {}", first.ids[i]));
    }
  }
  std::vector<double> sum(first.ids.size(), 0.0);
  Ranking meta;
  for (const ScoreList& list : per_seed) {
    if (list.ids.size() != first.ids.size() || list.scores.size() != list.ids.size()) {
      throw std::invalid_argument(fmt::format("merge_and_rank: seed {} covers {} ids, expected {}", list.seed,
                                              list.ids.size(), first.ids.size()));
    }
    std::vector<bool> seen(first.ids.size(), false);
    for (std::size_t i = 0; i < list.ids.size(); ++i) {
      auto it = position.find(list.ids[i]);
      if (it == position.end() || seen[it->second]) {
        throw std::invalid_argument(
            fmt::format("merge_and_rank: seed {} has unexpected id {}", list.seed, list.ids[i]));
      }
      seen[it->second] = true;
      sum[it->second] += list.scores[i];
    }
    meta.seeds.push_back(list.seed);
  }
  for (double& s : sum) s /= static_cast<double>(per_seed.size());
  Ranking r = SortRanking(first.ids, std::move(sum));
  r.seeds = std::move(meta.seeds);
  return r;
}

double TreeImpurityScore(const ExprTree& tree) {
  const std::vector<int> values = AnnotateStandard(tree);
  const double mean =
      std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  return std::abs(static_cast<double>(values.front()) - mean);
}

Ranking TreeImpurityRanking(const Dataset& data) {
  std::vector<ExampleId> ids(data.size());
  std::iota(ids.begin(), ids.end(), ExampleId{0});
  std::vector<double> scores(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) scores[i] = TreeImpurityScore(data[i].tree);
  Ranking r = SortRanking(std::move(ids), std::move(scores));
  r.method = "tis";
  return r;
}

std::vector<double> AverageRanks(const std::vector<double>& values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return values[x] < values[y]; });
  std::vector<double> ranks(values.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double shared = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = shared;
    i = j + 1;
  }
  return ranks;
}

double RankCorrelation(const Ranking& a, const Ranking& b) {
  if (a.ids.size() != b.ids.size()) throw std::invalid_argument("rank_correlation: rankings differ in size");
  std::unordered_map<ExampleId, double> b_score;
  for (std::size_t i = 0; i < b.ids.size(); ++i) b_score.emplace(b.ids[i], b.scores[i]);
  std::vector<double> xs(a.ids.size()), ys(a.ids.size());
  for (std::size_t i = 0; i < a.ids.size(); ++i) {
    auto it = b_score.find(a.ids[i]);
    if (it == b_score.end()) {
      throw std::invalid_argument(fmt::format("rank_correlation: id {} missing from second ranking", a.ids[i]));
    }
    xs[i] = a.scores[i];
    ys[i] = it->second;
  }
  const std::vector<double> rx = AverageRanks(xs);
  const std::vector<double> ry = AverageRanks(ys);
  const double n = static_cast<double>(rx.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

void WriteRankingCsv(const std::filesystem::path& path, const Ranking& ranking, const Dataset& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << fmt::format("# method={} bottleneck={} hyper={} seeds={}\n", ranking.method,
                     ranking.bottleneck.empty() ? "-" : ranking.bottleneck,
                     ranking.hyper.empty() ? "-" : ranking.hyper,
                     ranking.seeds.empty() ? std::string("-") : fmt::format("{}", fmt::join(ranking.seeds, ";")));
  out << "rank,example_id,score,is_exception,length,text\n";
  for (std::size_t i = 0; i < ranking.ids.size(); ++i) {
    const ExampleId id = ranking.ids[i];
    if (id < 0 || static_cast<std::size_t>(id) >= data.size()) {
      throw std::out_of_range(fmt::format("ranking id {} outside dataset of {}", id, data.size()));
    }
    const LabeledExample& ex = data[static_cast<std::size_t>(id)];
    out << fmt::format("{},{},{:.17g},{},{},{}\n", i, id, ranking.scores[i], ex.is_exception ? 1 : 0, ex.length,
                       ex.text);
  }
  if (!out) throw IoError("write failed for " + path.string());
}

Ranking ReadRankingCsv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open ranking " + path.string());
  Ranking r;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line.starts_with('#')) {
      std::istringstream ls(line.substr(1));
      std::string kv;
      while (ls >> kv) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = kv.substr(0, eq);
        std::string value = kv.substr(eq + 1);
        if (value == "-") value.clear();
        if (key == "method") r.method = value;
        if (key == "bottleneck") r.bottleneck = value;
        if (key == "hyper") r.hyper = value;
        if (key == "seeds" && !value.empty()) {
          std::istringstream ss(value);
          std::string s;
          while (std::getline(ss, s, ';')) r.seeds.push_back(std::stoull(s));
        }
      }
      continue;
    }
    if (line.starts_with("rank,")) continue;
    std::istringstream ls(line);
    std::string rank, id, score;
    if (!std::getline(ls, rank, ',') || !std::getline(ls, id, ',') || !std::getline(ls, score, ',')) {
      throw FormatError(fmt::format("{}: row {} has too few columns", path.string(), line_no), line_no);
    }
    try {
      r.ids.push_back(std::stoll(id));
      r.scores.push_back(std::stod(score));
    } catch (const std::exception&) {
      throw FormatError(fmt::format("{}: row {} has a non-numeric field", path.string(), line_no), line_no);
    }
  }
  return r;
}

}  // namespace bcm
