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

#include "bcm/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>
#include <openssl/evp.h>

#include "bcm/errors.hpp"
#include "bcm/eval.hpp"
#include "bcm/metric.hpp"
#include "bcm/plot.hpp"
#include "bcm/training.hpp"

namespace bcm {
namespace fs = std::filesystem;

fs::path Layout::model_dir(const std::string& model, std::uint64_t seed) const {
  return root_ / "models" / model / fmt::format("seed{}", seed);
}

fs::path Layout::rep(const std::string& model, std::uint64_t seed) const {
  return root_ / "reps" / model / fmt::format("seed{}.rep", seed);
}

fs::path Layout::seed_ranking(const std::string& name, std::uint64_t seed) const {
  return root_ / "rankings" / "per-seed" / fmt::format("{}_seed{}.csv", name, seed);
}

std::string RankingName(const std::string& method, const std::string& variant) {
  return variant.empty() ? method : method + "_" + variant;
}

namespace {

class Logger {
 public:
  explicit Logger(const RunOptions& options) : sink_(options.log) {}
  void operator()(const std::string& line) const {
    if (!sink_) return;
    std::lock_guard lock(mu_);
    sink_(line);
  }

 private:
  std::function<void(const std::string&)> sink_;
  mutable std::mutex mu_;
};

void Require(const fs::path& path, const char* producer) {
  if (!fs::exists(path)) {
    throw MissingInputError(fmt::format("missing input {}; run `bcm {}` first (same --config/--out)", path.string(),
                                        producer));
  }
}

void EnsureParent(const fs::path& path) { fs::create_directories(path.parent_path()); }

// Runs independent jobs. With a pool of several workers each job runs its own
// kernels serially; otherwise jobs run one after another and may use every
// core. Results do not depend on the choice.
void RunJobs(const std::vector<std::function<void(kernels::Execution)>>& jobs, int threads) {
  const int pool = threads > 0 ? threads : kernels::MaxThreads();
  if (pool > 1 && jobs.size() > 1) {
    kernels::SetThreads(pool);
    kernels::ForEach(jobs.size(), kernels::Execution::kParallel,
                     [&](std::size_t i) { jobs[i](kernels::Execution::kSerial); });
    return;
  }
  if (threads > 0) kernels::SetThreads(threads);
  for (const auto& job : jobs) job(kernels::Execution::kParallel);
}

Dataset LoadSplit(const Layout& layout, const std::string& split) {
  Require(layout.data(split), "gen");
  return ReadDataset(layout.data(split));
}

std::vector<std::string> ModelNames(const ExperimentConfig& config) {
  std::vector<std::string> names{"base"};
  for (const VariantConfig& v : config.variants) names.push_back(v.name);
  return names;
}

const ModelConfig& ModelFor(const ExperimentConfig& config, const std::string& name) {
  if (name == "base") return config.base;
  if (name.starts_with("tt-")) return config.variant(name.substr(3)).model;
  return config.variant(name).model;
}

void WriteResiduals(const fs::path& path, const std::vector<double>& residuals) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "example_id,residual\n";
  for (std::size_t i = 0; i < residuals.size(); ++i) out << fmt::format("{},{:.17g}\n", i, residuals[i]);
  if (!out) throw IoError("write failed for " + path.string());
}

ScoreList ReadResiduals(const fs::path& path, std::uint64_t seed) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  ScoreList list;
  list.seed = seed;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 || line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw FormatError(fmt::format("{}: row {} malformed", path.string(), line_no), line_no);
    list.ids.push_back(std::stoll(line.substr(0, comma)));
    list.scores.push_back(std::stod(line.substr(comma + 1)));
  }
  return list;
}

}  // namespace

void RunGen(const ExperimentConfig& config, const RunOptions& options) {
  const Layout layout(config.out_dir);
  Logger log(options);
  const Dataset train = GenerateSplit(config.train);
  auto seen = CanonicalStrings(train);
  const Dataset valid = GenerateSplit(config.valid, seen);
  for (const std::string& s : CanonicalStrings(valid)) seen.insert(s);
  const Dataset test = GenerateSplit(config.test, seen);
  for (const auto& [name, data] : {std::pair{"train", &train}, {"valid", &valid}, {"test", &test}}) {
    EnsureParent(layout.data(name));
    WriteDataset(layout.data(name), *data);
    const auto exceptions = std::count_if(data->begin(), data->end(), [](const auto& e) { return e.is_exception; });
    log(fmt::format("gen: {} examples ({} exceptions) -> {}", data->size(), exceptions, layout.data(name).string()));
  }
}

void RunTrain(const ExperimentConfig& config, const RunOptions& options) {
  const Layout layout(config.out_dir);
  Logger log(options);
  const Dataset train = LoadSplit(layout, "train");
  const Dataset valid = LoadSplit(layout, "valid");
  const Dataset test = LoadSplit(layout, "test");

  std::vector<std::function<void(kernels::Execution)>> jobs;
  for (const std::string& name : ModelNames(config)) {
    for (std::uint64_t seed : config.seeds) {
      jobs.push_back([&, name, seed](kernels::Execution exec) {
        TrainInputs inputs{.train = &train, .validation = &valid, .seed = seed, .exec = exec,
                           .progress = [&, name, seed](const std::string& m) {
                             log(fmt::format("train {} seed {}: {}", name, seed, m));
                           }};
        const TrainResult r = Train(ModelFor(config, name), config.training, inputs);
        EnsureParent(layout.checkpoint(name, seed));
        ad::SaveCheckpoint(layout.checkpoint(name, seed), r.params);
        WriteDynamicsCsv(layout.dynamics(name, seed), r.log);
      });
    }
  }
  RunJobs(jobs, options.threads);

  // Teacher-student runs need the finished base checkpoints.
  jobs.clear();
  for (const VariantConfig& v : config.variants) {
    if (!config.wants_tt(v.name)) continue;
    for (std::uint64_t seed : config.seeds) {
      jobs.push_back([&, seed, name = v.name](kernels::Execution exec) {
        const ad::ParamStore<float> teacher = ad::LoadCheckpoint(layout.checkpoint("base", seed));
        TrainInputs inputs{.train = &train, .validation = &valid, .seed = seed, .exec = exec,
                           .progress = [&, name, seed](const std::string& m) {
                             log(fmt::format("train tt-{} seed {}: {}", name, seed, m));
                           }};
        const TreResult r = TreTrain(config.base, teacher, config.variant(name).model, config.training, inputs, test);
        const std::string model = "tt-" + name;
        EnsureParent(layout.checkpoint(model, seed));
        ad::SaveCheckpoint(layout.checkpoint(model, seed), r.run.params);
        WriteDynamicsCsv(layout.dynamics(model, seed), r.run.log);
        WriteResiduals(layout.residuals(name, seed), r.residuals);
      });
    }
  }
  RunJobs(jobs, options.threads);
}

void RunExtract(const ExperimentConfig& config, const RunOptions& options) {
  const Layout layout(config.out_dir);
  Logger log(options);
  const Dataset test = LoadSplit(layout, "test");
  std::vector<std::function<void(kernels::Execution)>> jobs;
  for (const std::string& name : ModelNames(config)) {
    for (std::uint64_t seed : config.seeds) {
      Require(layout.checkpoint(name, seed), "train");
      jobs.push_back([&, name, seed](kernels::Execution exec) {
        const ModelConfig& model = ModelFor(config, name);
        const ad::ParamStore<float> params = ad::LoadCheckpoint(layout.checkpoint(name, seed));
        const RepresentationMatrix m = Extract(model, params, test, seed, name, exec);
        EnsureParent(layout.rep(name, seed));
        WriteRepresentation(layout.rep(name, seed), m);
        log(fmt::format("extract {} seed {}: {} x {}", name, seed, m.values.rows(), m.values.cols()));
      });
    }
  }
  RunJobs(jobs, options.threads);
}

void RunRank(const ExperimentConfig& config, const RunOptions& options) {
  const Layout layout(config.out_dir);
  Logger log(options);
  const Dataset test = LoadSplit(layout, "test");

  auto emit = [&](const std::string& method, const VariantConfig& v, const std::vector<ScoreList>& lists) {
    const std::string name = RankingName(method, v.name);
    for (const ScoreList& list : lists) {
      Ranking single = MergeAndRank({list});
      single.method = method;
      single.bottleneck = v.name;
      single.hyper = v.hyper;
      EnsureParent(layout.seed_ranking(name, list.seed));
      WriteRankingCsv(layout.seed_ranking(name, list.seed), single, test);
    }
    Ranking merged = MergeAndRank(lists);
    merged.method = method;
    merged.bottleneck = v.name;
    merged.hyper = v.hyper;
    EnsureParent(layout.ranking(name));
    WriteRankingCsv(layout.ranking(name), merged, test);
    log(fmt::format("rank {}: {} examples over {} seeds", name, merged.size(), lists.size()));
  };

  for (const VariantConfig& v : config.variants) {
    if (config.bcm.pp) {
      std::vector<ScoreList> lists;
      for (std::uint64_t seed : config.seeds) {
        Require(layout.rep("base", seed), "extract");
        Require(layout.rep(v.name, seed), "extract");
        long zero_norm = 0;
        lists.push_back(BcmPpScores(ReadRepresentation(layout.rep("base", seed)),
                                    ReadRepresentation(layout.rep(v.name, seed)), config.bcm.pp_options, &zero_norm));
        if (zero_norm > 0) {
          log(fmt::format("warning: {} seed {}: {} examples had a zero-norm projection (scored 1.0)", v.name, seed,
                          zero_norm));
        }
      }
      emit("bcm-pp", v, lists);
    }
    if (config.wants_tt(v.name)) {
      std::vector<ScoreList> lists;
      for (std::uint64_t seed : config.seeds) {
        Require(layout.residuals(v.name, seed), "train");
        lists.push_back(ReadResiduals(layout.residuals(v.name, seed), seed));
      }
      emit("bcm-tt", v, lists);
    }
  }
  const Ranking tis = TreeImpurityRanking(test);
  EnsureParent(layout.ranking("tis"));
  WriteRankingCsv(layout.ranking("tis"), tis, test);
}

namespace {

struct RankingFile {
  std::string name;
  std::string method;
  std::string variant;
};

std::vector<RankingFile> ExpectedRankings(const ExperimentConfig& config) {
  std::vector<RankingFile> out;
  for (const VariantConfig& v : config.variants) {
    if (config.bcm.pp) out.push_back({RankingName("bcm-pp", v.name), "bcm-pp", v.name});
    if (config.wants_tt(v.name)) out.push_back({RankingName("bcm-tt", v.name), "bcm-tt", v.name});
  }
  out.push_back({"tis", "tis", ""});
  return out;
}

nlohmann::json OptionalJson(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); }

}  // namespace

void RunEval(const ExperimentConfig& config, const RunOptions& options) {
  const Layout layout(config.out_dir);
  Logger log(options);
  const Dataset test = LoadSplit(layout, "test");

  std::vector<std::string> models = ModelNames(config);
  for (const VariantConfig& v : config.variants) {
    if (config.wants_tt(v.name)) models.push_back("tt-" + v.name);
  }
  std::vector<MseCell> cells;
  for (const std::string& name : models) {
    for (std::uint64_t seed : config.seeds) {
      Require(layout.checkpoint(name, seed), "train");
      const ad::ParamStore<float> params = ad::LoadCheckpoint(layout.checkpoint(name, seed));
      const Predictions p = Predict(ModelFor(config, name), params, test, false);
      const auto rows = MseTable(test, p.values, name, std::to_string(seed));
      cells.insert(cells.end(), rows.begin(), rows.end());
    }
  }
  const std::vector<MseCell> means = MeanOverSeeds(cells);
  cells.insert(cells.end(), means.begin(), means.end());
  fs::create_directories(layout.eval("spearman"));
  WriteMseTable(layout.eval("mse_table.csv"), cells);

  std::vector<RankingMetrics> metrics;
  std::map<std::string, Ranking> merged;
  nlohmann::json seed_level = nlohmann::json::array();
  for (const RankingFile& rf : ExpectedRankings(config)) {
    Require(layout.ranking(rf.name), "rank");
    merged[rf.name] = ReadRankingCsv(layout.ranking(rf.name));
    metrics.push_back(ComputeRankingMetrics(merged[rf.name], test, rf.name));
    if (rf.method == "tis") continue;
    std::vector<Ranking> per_seed;
    for (std::uint64_t seed : config.seeds) {
      Require(layout.seed_ranking(rf.name, seed), "rank");
      per_seed.push_back(ReadRankingCsv(layout.seed_ranking(rf.name, seed)));
      metrics.push_back(ComputeRankingMetrics(per_seed.back(), test, fmt::format("{}_seed{}", rf.name, seed)));
    }
    for (std::size_t i = 0; i < per_seed.size(); ++i) {
      for (std::size_t j = i + 1; j < per_seed.size(); ++j) {
        seed_level.push_back({{"ranking", rf.name},
                              {"seed_a", config.seeds[i]},
                              {"seed_b", config.seeds[j]},
                              {"rho", RankCorrelation(per_seed[i], per_seed[j])}});
      }
    }
  }
  WriteRankingMetrics(layout.eval("ranking_metrics.csv"), metrics);

  // Agreement between bottleneck families, within each method.
  nlohmann::json pairwise = nlohmann::json::array();
  const auto files = ExpectedRankings(config);
  for (std::size_t i = 0; i < files.size(); ++i) {
    for (std::size_t j = i + 1; j < files.size(); ++j) {
      if (files[i].method != files[j].method && files[i].method != "tis" && files[j].method != "tis") continue;
      pairwise.push_back({{"a", files[i].name},
                          {"b", files[j].name},
                          {"rho", RankCorrelation(merged[files[i].name], merged[files[j].name])}});
    }
  }
  nlohmann::json spearman = {{"pairwise", pairwise}, {"seed_level", seed_level}};
  std::ofstream(layout.eval("spearman/report.json"), std::ios::binary) << spearman.dump(2) << '\n';

  nlohmann::json report;
  report["seeds"] = config.seeds;
  report["test_examples"] = test.size();
  nlohmann::json mse = nlohmann::json::array();
  for (const MseCell& c : means) {
    mse.push_back({{"model", c.model},
                   {"length", c.length},
                   {"category", ToString(c.category)},
                   {"mse", OptionalJson(c.mse)},
                   {"count", c.count}});
  }
  report["mse_mean_over_seeds"] = mse;
  nlohmann::json rm = nlohmann::json::array();
  for (const RankingMetrics& m : metrics) {
    rm.push_back({{"name", m.name},
                  {"method", m.method},
                  {"bottleneck", m.bottleneck},
                  {"hyper", m.hyper},
                  {"mean_position_regular", OptionalJson(m.mean_position_regular)},
                  {"mean_position_exception", OptionalJson(m.mean_position_exception)},
                  {"auc", OptionalJson(m.auc)},
                  {"top_k_recall", OptionalJson(m.top_k_recall)}});
  }
  report["ranking_metrics"] = rm;
  report["spearman"] = spearman;
  std::vector<std::string> artifacts;
  for (const auto& entry : fs::recursive_directory_iterator(layout.root())) {
    if (!entry.is_regular_file()) continue;
    const std::string rel = fs::relative(entry.path(), layout.root()).generic_string();
    if (rel == "manifest.tsv" || rel == "eval/report.json") continue;
    artifacts.push_back(rel);
  }
  std::sort(artifacts.begin(), artifacts.end());
  report["artifacts"] = artifacts;
  std::ofstream(layout.eval("report.json"), std::ios::binary) << report.dump(2) << '\n';

  for (const RankingMetrics& m : metrics) {
    if (m.name.find("_seed") != std::string::npos) continue;
    log(fmt::format("eval {}: auc {} exception position {}", m.name,
                    m.auc ? fmt::format("{:.3f}", *m.auc) : "NA",
                    m.mean_position_exception ? fmt::format("{:.3f}", *m.mean_position_exception) : "NA"));
  }
}

DynamicsLog AverageDynamics(const std::vector<DynamicsLog>& logs) {
  using Key = std::tuple<double, int, int>;
  std::map<Key, std::pair<double, int>> acc;
  for (const DynamicsLog& log : logs) {
    for (const DynamicsRecord& r : log) {
      auto& [sum, n] = acc[{r.epoch, static_cast<int>(r.target_set), static_cast<int>(r.category)}];
      sum += r.mse;
      ++n;
    }
  }
  DynamicsLog out;
  for (const auto& [key, v] : acc) {
    out.push_back({.epoch = std::get<0>(key), .target_set = static_cast<TargetSet>(std::get<1>(key)),
                   .category = static_cast<Category>(std::get<2>(key)), .mse = v.first / v.second});
  }
  return out;
}

void RunPlot(const ExperimentConfig& config, const RunOptions& options) {
  const Layout layout(config.out_dir);
  Logger log(options);
  const Dataset test = LoadSplit(layout, "test");
  fs::create_directories(layout.plot("x").parent_path());

  std::vector<std::string> models = ModelNames(config);
  for (const VariantConfig& v : config.variants) {
    if (config.wants_tt(v.name)) models.push_back("tt-" + v.name);
  }
  for (const std::string& name : models) {
    std::vector<DynamicsLog> logs;
    for (std::uint64_t seed : config.seeds) {
      Require(layout.dynamics(name, seed), "train");
      logs.push_back(ReadDynamicsCsv(layout.dynamics(name, seed)));
    }
    plot::WriteSvg(layout.plot("dynamics_" + name), plot::DynamicsChart(name, AverageDynamics(logs)));
  }
  Require(layout.eval("mse_table.csv"), "eval");
  plot::WriteSvg(layout.plot("mse_by_length"), plot::MseByLengthChart(ReadMseTable(layout.eval("mse_table.csv"))));
  for (const RankingFile& rf : ExpectedRankings(config)) {
    Require(layout.ranking(rf.name), "rank");
    plot::WriteSvg(layout.plot("ranking_" + rf.name),
                   plot::RankingChart(rf.name, ReadRankingCsv(layout.ranking(rf.name)), test));
  }
  log(fmt::format("plot: wrote charts to {}", layout.plot("x").parent_path().string()));
}

std::string Sha256Hex(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot read " + file.string());
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw IoError("sha256 init failed");
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() > 0 && EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount())) != 1) {
      throw IoError("sha256 update failed");
    }
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_DigestFinal_ex(ctx.get(), digest, &len) != 1) throw IoError("sha256 final failed");
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", digest[i]);
  return hex;
}

void WriteManifest(const fs::path& root) {
  std::vector<std::string> files;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (!entry.is_regular_file()) continue;
    const std::string rel = fs::relative(entry.path(), root).generic_string();
    if (rel != "manifest.tsv") files.push_back(rel);
  }
  std::sort(files.begin(), files.end());
  std::ofstream out(root / "manifest.tsv", std::ios::binary);
  if (!out) throw IoError("cannot write manifest in " + root.string());
  out << "path\tsha256\tbytes\n";
  for (const std::string& rel : files) {
    out << fmt::format("{}\t{}\t{}\n", rel, Sha256Hex(root / rel), fs::file_size(root / rel));
  }
}

void RunAll(const ExperimentConfig& config, const RunOptions& options) {
  RunGen(config, options);
  RunTrain(config, options);
  RunExtract(config, options);
  RunRank(config, options);
  RunEval(config, options);
  RunPlot(config, options);
  WriteManifest(config.out_dir);
  if (options.log) options.log(fmt::format("run-all: manifest at {}", Layout(config.out_dir).manifest().string()));
}

}  // namespace bcm
