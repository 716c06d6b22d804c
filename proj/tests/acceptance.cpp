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

// Acceptance run: prints one PASS/FAIL line per criterion and exits non-zero
// if any fails. Criteria 5-8 train the desk configuration (several minutes on
// one core); criterion 9 runs the tiny configuration twice.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <Eigen/Eigenvalues>
#include <fmt/format.h>

#include "bcm/autodiff.hpp"
#include "bcm/config.hpp"
#include "bcm/datagen.hpp"
#include "bcm/eval.hpp"
#include "bcm/metric.hpp"
#include "bcm/pipeline.hpp"
#include "bcm/training.hpp"
#include "bcm/treelstm.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using namespace bcm;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double Seconds(Clock::time_point since) { return std::chrono::duration<double>(Clock::now() - since).count(); }

// 1. Adapted semantics against the text oracle on random trees.
Verdict SemanticsOracle() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(20231);
  std::uniform_int_distribution<int> length(1, kMaxLength);
  long bad = 0, exceptions = 0;
  for (int i = 0; i < 10000; ++i) {
    const LabeledExample ex = Label(SampleTree(length(rng), rng));
    testing::TextOracle oracle(ex.text);
    if (oracle.Eval(false) != ex.standard_value || oracle.Eval(true) != ex.adapted_value) ++bad;
    if (!testing::ZeroInRootRight(ex.tree) && ex.adapted_value != ex.standard_value) ++bad;
    if ((ex.adapted_value != ex.standard_value) != ex.is_exception) ++bad;
    exceptions += ex.is_exception;
  }
  const double secs = Seconds(t0);
  return {bad == 0 && secs < 5.0, fmt::format("10000 trees, {} violations, {} exceptions, {:.2f}s", bad, exceptions, secs)};
}

// 2. Analytic vs central-difference gradients of the full DVIB objective.
Verdict GradientFidelity() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<int> length(1, 4);
  std::uniform_real_distribution<double> beta_draw(0.05, 1.0);
  std::normal_distribution<double> jitter(0.0, 0.3);
  double worst = 0;
  long checked = 0;
  for (int draw = 0; draw < 50; ++draw) {
    ModelConfig c;
    c.kind = BottleneckKind::kDvib;
    c.embedding_dim = 6;
    c.hidden_dim = 5;
    c.head_hidden = 7;
    c.beta = beta_draw(rng);
    auto p = InitParams(c, 1000 + static_cast<std::uint64_t>(draw)).Cast<double>();
    for (std::size_t i = 0; i < p.size(); ++i) {
      for (double& v : p[i].value) v += jitter(rng);
    }
    const LabeledExample ex = Label(SampleTree(length(rng), rng));
    auto loss = [&](ad::GradBuffer<double>* grads) {
      std::mt19937_64 noise = ExampleRng(static_cast<std::uint64_t>(draw), 0, 0);
      ad::Graph<double> g;
      return ExampleLoss(ex, c, p, c.beta, {.mode = ad::Mode::kTrain, .rng = &noise, .zero_noise = false}, g, grads)
          .total;
    };
    ad::GradBuffer<double> grads(p);
    loss(&grads);
    for (std::size_t i = 0; i < p.size(); ++i) {
      for (std::size_t k = 0; k < p[i].value.size(); ++k) {
        const double saved = p[i].value[k];
        auto at = [&](double dx) {
          p[i].value[k] = saved + dx;
          const double v = loss(nullptr);
          p[i].value[k] = saved;
          return v;
        };
        // Fourth-order central stencil: a wider step keeps roundoff on the ~1e2
        // loss well below the 1e-6-sized gradient entries.
        const double h = 1e-3;
        const double numeric = (8 * (at(h) - at(-h)) - (at(2 * h) - at(-2 * h))) / (12 * h);
        const double analytic = grads[i][k];
        worst = std::max(worst, std::abs(numeric - analytic) / std::max(1e-6, std::abs(numeric) + std::abs(analytic)));
        ++checked;
      }
    }
  }
  const double secs = Seconds(t0);
  return {worst <= 1e-4 && secs < 60.0,
          fmt::format("50 draws, {} coordinates, worst relative error {:.2e}, {:.1f}s", checked, worst, secs)};
}

// 3. Closed-form KL against a Monte-Carlo estimate.
Verdict KlCorrectness() {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> mu_draw(-1.5, 1.5), sigma_draw(0.4, 1.8);
  std::normal_distribution<double> normal;
  const int dim = 3;
  const long samples = 1000000;
  double worst = 0;
  for (int pair = 0; pair < 20; ++pair) {
    std::vector<double> mu(dim), sigma(dim);
    for (int d = 0; d < dim; ++d) {
      mu[static_cast<std::size_t>(d)] = mu_draw(rng);
      sigma[static_cast<std::size_t>(d)] = sigma_draw(rng);
    }
    ad::Graph<double> g;
    const double closed = g.scalar(g.KlStdNormal(g.Constant(mu), g.Constant(sigma)));
    // E_q[log q(z) - log p(z)]; the 2*pi terms cancel.
    double acc = 0;
    for (long s = 0; s < samples; ++s) {
      for (int d = 0; d < dim; ++d) {
        const double e = normal(rng);
        const double z = mu[static_cast<std::size_t>(d)] + sigma[static_cast<std::size_t>(d)] * e;
        acc += -std::log(sigma[static_cast<std::size_t>(d)]) - 0.5 * e * e + 0.5 * z * z;
      }
    }
    worst = std::max(worst, std::abs(acc / static_cast<double>(samples) - closed));
  }
  ad::Graph<double> g;
  const std::vector<double> zeros(8, 0.0), ones(8, 1.0);
  const double standard = g.scalar(g.KlStdNormal(g.Constant(zeros), g.Constant(ones)));
  return {worst <= 1e-2 && standard == 0.0,
          fmt::format("20 pairs, worst |closed - MC| {:.2e}; KL(N(0,I)||N(0,I)) = {}", worst, standard)};
}

Eigen::MatrixXd Gaussian(int rows, int cols, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Eigen::MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = normal(rng);
  return m;
}

// Column-wise sign alignment of y to x.
Eigen::MatrixXd Aligned(const Eigen::MatrixXd& x, Eigen::MatrixXd y) {
  for (int k = 0; k < y.cols(); ++k) {
    if (x.col(k).dot(y.col(k)) < 0) y.col(k) *= -1;
  }
  return y;
}

// 4. CCA against the generalized eigenproblem, self-CCA and invariance.
Verdict CcaCorrectness() {
  std::mt19937_64 rng(404);
  double corr_err = 0, proj_err = 0, self_err = 0, inv_err = 0;
  for (int trial = 0; trial < 10; ++trial) {
    const Eigen::MatrixXd z = Gaussian(200, 2, rng);
    const Eigen::MatrixXd a = z * Gaussian(2, 5, rng) + Gaussian(200, 5, rng);
    const Eigen::MatrixXd b = z * Gaussian(2, 5, rng) + Gaussian(200, 5, rng);
    const CcaResult r = CcaFit(a, b, 0, 0.0);
    const Eigen::MatrixXd ac = a.rowwise() - a.colwise().mean();
    const Eigen::MatrixXd bc = b.rowwise() - b.colwise().mean();
    const Eigen::MatrixXd caa = ac.transpose() * ac / 199.0;
    const Eigen::MatrixXd cbb = bc.transpose() * bc / 199.0;
    const Eigen::MatrixXd cab = ac.transpose() * bc / 199.0;
    // Caa^-1 Cab Cbb^-1 Cba w = rho^2 w, as the symmetric-definite pair (Cab Cbb^-1 Cba, Caa).
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> oracle(cab * cbb.inverse() * cab.transpose(), caa);
    Eigen::MatrixXd w(5, 5);
    for (int k = 0; k < 5; ++k) {
      corr_err = std::max(corr_err, std::abs(r.correlations(k) - std::sqrt(std::max(0.0, oracle.eigenvalues()(4 - k)))));
      w.col(k) = oracle.eigenvectors().col(4 - k);
    }
    const Eigen::MatrixXd pa = ac * r.w;
    proj_err = std::max(proj_err, (pa - Aligned(pa, ac * w)).cwiseAbs().maxCoeff());

    const CcaResult self = CcaFit(a, a, 0, 0.0);
    self_err = std::max(self_err, (self.correlations.array() - 1.0).abs().maxCoeff());

    Eigen::MatrixXd m = Gaussian(5, 5, rng);
    while (std::abs(m.determinant()) < 0.1) m = Gaussian(5, 5, rng);
    const CcaResult mapped = CcaFit(a * m, b, 0, 0.0);
    inv_err = std::max(inv_err, (mapped.correlations - r.correlations).cwiseAbs().maxCoeff());
    const Eigen::MatrixXd pm = ((a * m).rowwise() - mapped.mean_a) * mapped.w;
    inv_err = std::max(inv_err, (pa - Aligned(pa, pm)).cwiseAbs().maxCoeff());
    const CcaResult linked = CcaFit(a, a * m, 0, 0.0);
    inv_err = std::max(inv_err, (linked.correlations.array() - 1.0).abs().maxCoeff());
  }
  const bool pass = corr_err <= 1e-6 && proj_err <= 1e-6 && self_err <= 1e-6 && inv_err <= 1e-6;
  return {pass, fmt::format("10 trials 200x5: correlations {:.1e}, projections {:.1e}, self {:.1e}, invariance {:.1e}",
                            corr_err, proj_err, self_err, inv_err)};
}

struct Pooled {
  double regular = NAN;
  double exception = NAN;
};

// Seed-averaged cells pooled over lengths, weighted by example count.
Pooled PoolMeans(const std::vector<MseCell>& cells, const std::string& model) {
  double sum[2] = {0, 0};
  long n[2] = {0, 0};
  for (const MseCell& c : cells) {
    if (c.model != model || c.seed != "mean" || !c.mse) continue;
    const int k = c.category == Category::kException ? 1 : 0;
    sum[k] += *c.mse * static_cast<double>(c.count);
    n[k] += c.count;
  }
  return {n[0] ? sum[0] / static_cast<double>(n[0]) : NAN, n[1] ? sum[1] / static_cast<double>(n[1]) : NAN};
}

// 5. Exception vs regular test MSE for the base and the DVIB model.
Verdict MseGap(const fs::path& out) {
  const auto cells = ReadMseTable(Layout(out).eval("mse_table.csv"));
  const Pooled base = PoolMeans(cells, "base");
  const Pooled dvib = PoolMeans(cells, "dvib");
  const bool a = base.exception <= 3.0 * base.regular;
  const bool b = dvib.exception >= 2.0 * dvib.regular;
  const bool c = dvib.exception >= 2.0 * base.exception;
  return {a && b && c,
          fmt::format("base exc/reg {:.2f}/{:.2f} = {:.2f}x (<=3 {}); dvib exc/reg {:.2f}/{:.2f} = {:.2f}x (>=2 {}); "
                      "dvib/base exc = {:.2f}x (>=2 {})",
                      base.exception, base.regular, base.exception / base.regular, a ? "ok" : "no", dvib.exception,
                      dvib.regular, dvib.exception / dvib.regular, b ? "ok" : "no", dvib.exception / base.exception,
                      c ? "ok" : "no")};
}

std::optional<double> At(const DynamicsLog& log, double epoch, TargetSet t) {
  for (const DynamicsRecord& r : log) {
    if (r.epoch == epoch && r.target_set == t && r.category == Category::kException) return r.mse;
  }
  return std::nullopt;
}

// 6. Validation dynamics on exceptions, averaged over seeds.
Verdict Dynamics(const fs::path& out, const ExperimentConfig& config) {
  const Layout layout(out);
  auto averaged = [&](const std::string& model) {
    std::vector<DynamicsLog> logs;
    for (std::uint64_t seed : config.seeds) logs.push_back(ReadDynamicsCsv(layout.dynamics(model, seed)));
    return AverageDynamics(logs);
  };
  const DynamicsLog dvib = averaged("dvib");
  const DynamicsLog base = averaged("base");
  const double early_limit = 0.1 * config.training.epochs;
  double early = -1, last = -1;
  for (const DynamicsRecord& r : dvib) {
    if (r.epoch >= early_limit && (early < 0 || r.epoch < early)) early = r.epoch;
  }
  for (const DynamicsRecord& r : base) last = std::max(last, r.epoch);
  const auto dc = At(dvib, early, TargetSet::kCompositional), da = At(dvib, early, TargetSet::kAdapted);
  const auto bc = At(base, last, TargetSet::kCompositional), ba = At(base, last, TargetSet::kAdapted);
  if (!dc || !da || !bc || !ba) return {false, "dynamics logs lack exception records"};
  const bool a = *dc < *da;
  const bool b = *ba < *bc;
  return {a && b, fmt::format("dvib at epoch {:g}: exc compositional {:.2f} vs adapted {:.2f} ({}); base at epoch {:g}: "
                              "exc adapted {:.2f} vs compositional {:.2f} ({})",
                              early, *dc, *da, a ? "ok" : "no", last, *ba, *bc, b ? "ok" : "no")};
}

const RankingMetrics* Row(const std::vector<RankingMetrics>& rows, const std::string& name) {
  for (const RankingMetrics& r : rows) {
    if (r.name == name) return &r;
  }
  return nullptr;
}

// 7. Separation of exceptions by the seed-averaged rankings.
Verdict Separation(const fs::path& out) {
  const auto rows = ReadRankingMetrics(Layout(out).eval("ranking_metrics.csv"));
  const RankingMetrics* pp = Row(rows, RankingName("bcm-pp", "dvib"));
  const RankingMetrics* tt = Row(rows, RankingName("bcm-tt", "dvib"));
  if (!pp || !tt || !pp->auc || !pp->mean_position_exception || !tt->auc) return {false, "missing ranking metrics"};
  const bool a = *pp->auc >= 0.75, b = *pp->mean_position_exception >= 0.65, c = *tt->auc >= 0.70;
  return {a && b && c, fmt::format("bcm-pp auc {:.3f} (>=0.75 {}), exception position {:.3f} (>=0.65 {}); "
                                   "bcm-tt auc {:.3f} (>=0.70 {})",
                                   *pp->auc, a ? "ok" : "no", *pp->mean_position_exception, b ? "ok" : "no", *tt->auc,
                                   c ? "ok" : "no")};
}

// 8. Pairwise Spearman correlation of the three bottleneck families.
Verdict FamilyAgreement(const fs::path& out) {
  const Layout layout(out);
  const std::vector<std::string> variants = {"dvib", "dropout", "hidden"};
  std::vector<Ranking> rankings;
  for (const std::string& v : variants) rankings.push_back(ReadRankingCsv(layout.ranking(RankingName("bcm-pp", v))));
  bool pass = true;
  std::string detail;
  for (std::size_t i = 0; i < rankings.size(); ++i) {
    for (std::size_t j = i + 1; j < rankings.size(); ++j) {
      const double rho = RankCorrelation(rankings[i], rankings[j]);
      pass = pass && rho >= 0.3;
      detail += fmt::format("{}{}~{} rho {:.3f}", detail.empty() ? "" : ", ", variants[i], variants[j], rho);
    }
  }
  return {pass, detail + " (each >=0.3)"};
}

std::string Slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// 9. Two run-all passes produce the same bytes.
Verdict Determinism(const fs::path& work) {
  ExperimentConfig config = LoadConfig(fs::path(BCM_CONFIG_DIR) / "tiny.ini");
  RunOptions options{.threads = 0, .log = {}};
  std::string manifests[2];
  for (int pass = 0; pass < 2; ++pass) {
    config.out_dir = work / fmt::format("tiny_{}", pass);
    fs::remove_all(config.out_dir);
    RunAll(config, options);
    manifests[pass] = Slurp(Layout(config.out_dir).manifest());
  }
  long files = 0;
  bool kinds[4] = {false, false, false, false};
  std::istringstream lines(manifests[0]);
  for (std::string line; std::getline(lines, line);) {
    ++files;
    kinds[0] = kinds[0] || line.starts_with("data/");
    kinds[1] = kinds[1] || line.find("model.ckpt") != std::string::npos;
    kinds[2] = kinds[2] || line.starts_with("rankings/");
    kinds[3] = kinds[3] || line.find(".svg\t") != std::string::npos;
  }
  const bool covered = kinds[0] && kinds[1] && kinds[2] && kinds[3];
  const bool same = !manifests[0].empty() && manifests[0] == manifests[1];
  return {same && covered, fmt::format("{} files hashed; manifests {}; datasets, checkpoints, rankings and SVGs {}",
                                       files, same ? "identical" : "differ", covered ? "present" : "missing")};
}

// 10. Tree impurity score on hand-worked trees.
Verdict TreeImpurity() {
  // |root - mean of every node value|
  const std::vector<std::pair<std::string, double>> cases = {
      {"( 1 + 2 )", 1.0},
      {"( 5 - 5 )", std::abs(0.0 - 10.0 / 3.0)},
      {"( ( 1 + 1 ) + 1 )", std::abs(3.0 - 8.0 / 5.0)},
      {"( 0 + 0 )", 0.0},
      {"( -4 + 4 )", 0.0},
      {"( ( 2 - 3 ) - ( 4 + -6 ) )", std::abs(1.0 - 1.0 / 7.0)},
      {"( 10 + 10 )", std::abs(20.0 - 40.0 / 3.0)},
      {"( 3 - ( 1 + 1 ) )", std::abs(1.0 - 8.0 / 5.0)},
      {"( ( -1 - -1 ) + 7 )", std::abs(7.0 - 12.0 / 5.0)},
      {"( 2 + ( 3 + ( 4 + 5 ) ) )", 7.0},
  };
  int exact = 0;
  for (const auto& [text, expected] : cases) exact += TreeImpurityScore(Parse(text)) == expected;
  int leaves = 0;
  for (int v = kMinNumeral; v <= kMaxNumeral; ++v) leaves += TreeImpurityScore(Parse(std::to_string(v))) == 0.0;
  const int n_leaves = kMaxNumeral - kMinNumeral + 1;
  return {exact == 10 && leaves == n_leaves,
          fmt::format("{}/10 hand trees exact, {}/{} single leaves score 0", exact, leaves, n_leaves)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance checks"};
  fs::path work = fs::temp_directory_path() / "bcm_acceptance";
  bool reuse = false;
  app.add_option("--work", work, "scratch directory");
  app.add_flag("--reuse", reuse, "keep an existing desk run in <work>/desk instead of retraining");
  CLI11_PARSE(app, argc, argv);

  bool all = true;
  auto report = [&](int id, const std::function<Verdict()>& check) {
    Verdict v;
    try {
      v = check();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    all = all && v.pass;
    std::cout << fmt::format("criterion {}: {} - {}", id, v.pass ? "PASS" : "FAIL", v.detail) << std::endl;
  };

  report(1, SemanticsOracle);
  report(2, GradientFidelity);
  report(3, KlCorrectness);
  report(4, CcaCorrectness);

  ExperimentConfig desk = LoadConfig(fs::path(BCM_CONFIG_DIR) / "desk.ini");
  desk.out_dir = work / "desk";
  std::string desk_error;
  try {
    if (!(reuse && fs::exists(Layout(desk.out_dir).manifest()))) {
      const auto t0 = Clock::now();
      fs::remove_all(desk.out_dir);
      RunAll(desk, {.threads = 0, .log = {}});
      std::cout << fmt::format("desk run-all: {:.0f}s", Seconds(t0)) << std::endl;
    }
  } catch (const std::exception& e) {
    desk_error = e.what();
  }
  auto desk_check = [&](std::function<Verdict()> check) {
    return [&desk_error, check] { return desk_error.empty() ? check() : Verdict{false, "desk run failed: " + desk_error}; };
  };
  report(5, desk_check([&] { return MseGap(desk.out_dir); }));
  report(6, desk_check([&] { return Dynamics(desk.out_dir, desk); }));
  report(7, desk_check([&] { return Separation(desk.out_dir); }));
  report(8, desk_check([&] { return FamilyAgreement(desk.out_dir); }));
  report(9, [&] { return Determinism(work); });
  report(10, TreeImpurity);

  std::cout << (all ? "acceptance: all criteria PASS" : "acceptance: some criteria FAIL") << std::endl;
  return all ? 0 : 1;
}
