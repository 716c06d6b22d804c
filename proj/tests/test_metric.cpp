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

#include <cmath>
#include <random>

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include "bcm/metric.hpp"
#include "test_util.hpp"

namespace bcm {
namespace {

Eigen::MatrixXd Random(int rows, int cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Eigen::MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = normal(rng);
  return m;
}

// Two views sharing a few latent directions.
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> CorrelatedViews(int n, int da, int db, std::uint64_t seed) {
  const Eigen::MatrixXd z = Random(n, 3, seed);
  Eigen::MatrixXd a = z * Random(3, da, seed + 1) + 0.8 * Random(n, da, seed + 2);
  Eigen::MatrixXd b = z * Random(3, db, seed + 3) + 0.8 * Random(n, db, seed + 4);
  return {a, b};
}

// Canonical variates are defined up to sign; align each column of y to x.
Eigen::MatrixXd AlignSigns(const Eigen::MatrixXd& x, Eigen::MatrixXd y) {
  for (int k = 0; k < y.cols(); ++k) {
    if (x.col(k).dot(y.col(k)) < 0) y.col(k) *= -1;
  }
  return y;
}

TEST(Cca, MatchesGeneralizedEigenOracle) {
  const auto [a, b] = CorrelatedViews(200, 5, 5, 10);
  const CcaResult r = CcaFit(a, b, 0, 0.0);
  ASSERT_EQ(r.correlations.size(), 5);

  const Eigen::MatrixXd ac = a.rowwise() - a.colwise().mean();
  const Eigen::MatrixXd bc = b.rowwise() - b.colwise().mean();
  const double n1 = 199.0;
  const Eigen::MatrixXd caa = ac.transpose() * ac / n1;
  const Eigen::MatrixXd cbb = bc.transpose() * bc / n1;
  const Eigen::MatrixXd cab = ac.transpose() * bc / n1;
  const Eigen::MatrixXd lhs = cab * cbb.inverse() * cab.transpose();
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> oracle(lhs, caa);
  // Ascending eigenvalues rho^2; eigenvectors normalized so w' Caa w = 1.
  for (int k = 0; k < 5; ++k) {
    EXPECT_NEAR(r.correlations(k), std::sqrt(std::max(0.0, oracle.eigenvalues()(4 - k))), 1e-6);
  }
  Eigen::MatrixXd w_oracle(5, 5);
  for (int k = 0; k < 5; ++k) w_oracle.col(k) = oracle.eigenvectors().col(4 - k);
  const Eigen::MatrixXd proj = ac * r.w;
  const Eigen::MatrixXd proj_oracle = AlignSigns(proj, ac * w_oracle);
  EXPECT_LT((proj - proj_oracle).cwiseAbs().maxCoeff(), 1e-6);
  // Canonical variates have unit variance and pair up with correlation rho.
  const Eigen::MatrixXd pb = bc * r.v;
  for (int k = 0; k < 5; ++k) {
    EXPECT_NEAR(proj.col(k).squaredNorm() / n1, 1.0, 1e-9);
    EXPECT_NEAR(proj.col(k).dot(pb.col(k)) / n1, r.correlations(k), 1e-9);
  }
  for (int k = 1; k < 5; ++k) EXPECT_GE(r.correlations(k - 1), r.correlations(k));
}

TEST(Cca, UnequalWidthsAndTruncation) {
  const auto [a, b] = CorrelatedViews(150, 6, 3, 20);
  const CcaResult r = CcaFit(a, b, 0, 0.0);
  EXPECT_EQ(r.correlations.size(), 3);
  EXPECT_EQ(r.w.rows(), 6);
  EXPECT_EQ(r.v.rows(), 3);
  const CcaResult r2 = CcaFit(a, b, 2, 0.0);
  EXPECT_EQ(r2.w.cols(), 2);
  EXPECT_NEAR(r2.correlations(0), r.correlations(0), 1e-12);
  EXPECT_THROW(CcaFit(a, b, 4, 0.0), DimensionError);
  EXPECT_THROW(CcaFit(a, b.topRows(10), 0, 0.0), DimensionError);
}

TEST(Cca, SelfCorrelationIsOne) {
  const Eigen::MatrixXd a = Random(200, 5, 3);
  const CcaResult r = CcaFit(a, a, 0, 0.0);
  for (int k = 0; k < 5; ++k) EXPECT_NEAR(r.correlations(k), 1.0, 1e-9);
}

TEST(Cca, InvariantUnderInvertibleMaps) {
  const auto [a, b] = CorrelatedViews(200, 5, 5, 30);
  const Eigen::MatrixXd m = Random(5, 5, 31) + 3 * Eigen::MatrixXd::Identity(5, 5);
  ASSERT_GT(std::abs(m.determinant()), 1e-3);
  const CcaResult r = CcaFit(a, b, 0, 0.0);
  const CcaResult rt = CcaFit(a * m, (b * m.transpose()).rowwise() + Eigen::RowVectorXd::Constant(5, 4.0), 0, 0.0);
  EXPECT_LT((r.correlations - rt.correlations).cwiseAbs().maxCoeff(), 1e-6);
  const Eigen::MatrixXd pa = (a.rowwise() - r.mean_a) * r.w;
  const Eigen::MatrixXd pt = ((a * m).rowwise() - rt.mean_a) * rt.w;
  EXPECT_LT((pa - AlignSigns(pa, pt)).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Cca, RankDeficiencyNeedsRidge) {
  Eigen::MatrixXd a = Random(100, 4, 5);
  a.col(3) = a.col(0) + a.col(1);
  const Eigen::MatrixXd b = Random(100, 3, 6);
  EXPECT_THROW(CcaFit(a, b, 0, 0.0), NumericError);
  const CcaResult r = CcaFit(a, b, 0, 1e-4);
  for (int k = 0; k < r.correlations.size(); ++k) {
    EXPECT_GE(r.correlations(k), 0.0);
    EXPECT_LE(r.correlations(k), 1.0);
  }
}

TEST(Cosine, DistanceValues) {
  Eigen::VectorXd x(2), y(2), z(2);
  x << 1, 0;
  y << 0, 3;
  z << 0, 0;
  long zeros = 0;
  EXPECT_NEAR(CosineDistance(x, x), 0.0, 1e-15);
  EXPECT_NEAR(CosineDistance(x, -x), 2.0, 1e-15);
  EXPECT_NEAR(CosineDistance(x, y), 1.0, 1e-15);
  EXPECT_EQ(CosineDistance(x, z, &zeros), 1.0);
  EXPECT_EQ(zeros, 1);
}

RepresentationMatrix Rep(Eigen::MatrixXd values, std::uint64_t seed, std::string tag) {
  RepresentationMatrix m;
  m.values = std::move(values);
  m.ids.resize(static_cast<std::size_t>(m.values.rows()));
  for (std::size_t i = 0; i < m.ids.size(); ++i) m.ids[i] = static_cast<ExampleId>(i);
  m.seed = seed;
  m.tag = std::move(tag);
  return m;
}

TEST(BcmPp, IdenticalRepresentationsScoreZero) {
  const Eigen::MatrixXd a = Random(120, 6, 8);
  const ScoreList s = BcmPpScores(Rep(a, 1, "base"), Rep(a, 1, "x"), {.k = 0, .reg = 1e-4});
  ASSERT_EQ(s.scores.size(), 120u);
  for (double v : s.scores) EXPECT_NEAR(v, 0.0, 1e-9);
  EXPECT_EQ(s.seed, 1u);
}

TEST(BcmPp, PerturbedRowsScoreHigher) {
  const Eigen::MatrixXd a = Random(300, 6, 8);
  Eigen::MatrixXd b = a * Random(6, 6, 9) + 0.01 * Random(300, 6, 10);
  for (int i = 0; i < 30; ++i) b.row(i) = Random(1, 6, 100 + i) * 3;
  const ScoreList s = BcmPpScores(Rep(a, 1, "base"), Rep(b, 1, "x"), {});
  double outliers = 0, rest = 0;
  for (int i = 0; i < 300; ++i) (i < 30 ? outliers : rest) += s.scores[static_cast<std::size_t>(i)];
  EXPECT_GT(outliers / 30, 5 * rest / 270);
  RepresentationMatrix shuffled = Rep(b, 1, "x");
  std::swap(shuffled.ids[0], shuffled.ids[1]);
  EXPECT_THROW(BcmPpScores(Rep(a, 1, "base"), shuffled, {}), DimensionError);
}

TEST(Ranking, MergeAveragesAndBreaksTiesById) {
  const ScoreList s1{.ids = {0, 1, 2}, .scores = {0.3, 0.1, 0.2}, .seed = 1};
  const ScoreList s2{.ids = {2, 0, 1}, .scores = {0.4, 0.1, 0.5}, .seed = 2};
  const Ranking r = MergeAndRank({s1, s2});
  EXPECT_EQ(r.ids, (std::vector<ExampleId>{0, 1, 2}));
  EXPECT_DOUBLE_EQ(r.scores[0], 0.2);
  EXPECT_DOUBLE_EQ(r.scores[1], 0.3);
  EXPECT_DOUBLE_EQ(r.scores[2], 0.3);
  EXPECT_EQ(r.seeds, (std::vector<std::uint64_t>{1, 2}));
  const ScoreList bad{.ids = {0, 1, 3}, .scores = {0, 0, 0}, .seed = 3};
  EXPECT_THROW(MergeAndRank({s1, bad}), std::invalid_argument);
  const ScoreList shorter{.ids = {0, 1}, .scores = {0, 0}, .seed = 3};
  EXPECT_THROW(MergeAndRank({s1, shorter}), std::invalid_argument);
  EXPECT_THROW(MergeAndRank({}), std::invalid_argument);
}

TEST(Ranking, AverageRanksAndSpearman) {
  EXPECT_EQ(AverageRanks({10, 20, 20, 5}), (std::vector<double>{2, 3.5, 3.5, 1}));
  auto ranking = [](std::vector<double> scores) {
    Ranking r;
    for (std::size_t i = 0; i < scores.size(); ++i) r.ids.push_back(static_cast<ExampleId>(i));
    r.scores = std::move(scores);
    return r;
  };
  EXPECT_NEAR(RankCorrelation(ranking({1, 2, 3, 4, 5}), ranking({5, 6, 7, 8, 7})), 0.8207826816681233, 1e-12);
  EXPECT_NEAR(RankCorrelation(ranking({0.3, 0.1, 0.9, 0.9, 0.2, 0.5}), ranking({1, 3, 2, 2, 5, 4})),
              -0.411764705882353, 1e-12);
  EXPECT_NEAR(RankCorrelation(ranking({1, 2, 3}), ranking({3, 2, 1})), -1.0, 1e-15);
  // Ids are matched, not positions.
  Ranking permuted = ranking({1, 2, 3});
  std::swap(permuted.ids[0], permuted.ids[2]);
  std::swap(permuted.scores[0], permuted.scores[2]);
  EXPECT_NEAR(RankCorrelation(ranking({1, 2, 3}), permuted), 1.0, 1e-15);
}

TEST(TreeImpurity, HandComputed) {
  EXPECT_EQ(TreeImpurityScore(Parse("( 1 + 2 )")), 1.0);
  EXPECT_EQ(TreeImpurityScore(Parse("7")), 0.0);
  EXPECT_EQ(TreeImpurityScore(Parse("( 2 + ( 3 + ( 4 + 5 ) ) )")), 7.0);
  const Dataset data{Label(Parse("( 5 - 5 )")), Label(Parse("3")), Label(Parse("( 1 + 2 )"))};
  const Ranking r = TreeImpurityRanking(data);
  EXPECT_EQ(r.ids, (std::vector<ExampleId>{1, 2, 0}));
  EXPECT_EQ(r.method, "tis");
}

TEST(Files, RepresentationAndRankingRoundTrip) {
  const auto dir = testing::TempDir("metric_files");
  RepresentationMatrix m = Rep(Random(7, 3, 2), 42, "dvib");
  m.ids = {5, 4, 3, 2, 1, 0, 6};
  WriteRepresentation(dir / "m.rep", m);
  const RepresentationMatrix back = ReadRepresentation(dir / "m.rep");
  EXPECT_EQ(back.ids, m.ids);
  EXPECT_EQ(back.seed, 42u);
  EXPECT_EQ(back.tag, "dvib");
  EXPECT_EQ(back.values, m.values);
  EXPECT_THROW(ReadRepresentation(dir / "none.rep"), IoError);

  const Dataset data{Label(Parse("( 5 + 0 )")), Label(Parse("( 1 + 2 )"))};
  Ranking r{.ids = {1, 0}, .scores = {0.25, 1.0 / 3}, .method = "bcm-pp", .bottleneck = "dvib",
            .hyper = "beta=0.25", .seeds = {1, 2}};
  WriteRankingCsv(dir / "r.csv", r, data);
  const Ranking rb = ReadRankingCsv(dir / "r.csv");
  EXPECT_EQ(rb.ids, r.ids);
  EXPECT_EQ(rb.scores, r.scores);
  EXPECT_EQ(rb.method, "bcm-pp");
  EXPECT_EQ(rb.bottleneck, "dvib");
  EXPECT_EQ(rb.hyper, "beta=0.25");
  EXPECT_EQ(rb.seeds, r.seeds);
}

}  // namespace
}  // namespace bcm
