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

// Command-line entry point. Exit codes: 0 success, 1 runtime failure,
// 2 usage or configuration error.

#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "bcm/config.hpp"
#include "bcm/errors.hpp"
#include "bcm/pipeline.hpp"

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bottleneck compositionality metric on the arithmetic task"};
  app.require_subcommand(1, 1);
  app.fallthrough();

  std::string config_path;
  std::string out_dir;
  std::string seeds_text;
  long long single_seed = -1;
  int threads = 0;
  bool quiet = false;
  app.add_option("-c,--config", config_path, "experiment config (INI)")->required()->check(CLI::ExistingFile);
  app.add_option("-o,--out", out_dir, "output directory (overrides BCM_OUT and the config)");
  auto* seeds_opt = app.add_option("--seeds", seeds_text, "comma separated training seeds");
  app.add_option("--seed", single_seed, "a single training seed")->excludes(seeds_opt)->check(CLI::NonNegativeNumber);
  app.add_option("-j,--threads", threads, "worker threads (0 = all cores)")->check(CLI::NonNegativeNumber);
  app.add_flag("-q,--quiet", quiet, "suppress progress output");

  struct Stage {
    const char* name;
    const char* help;
    void (*run)(const bcm::ExperimentConfig&, const bcm::RunOptions&);
  };
  const Stage stages[] = {
      {"gen", "generate train/valid/test splits", bcm::RunGen},
      {"train", "train base, bottleneck and teacher-student models", bcm::RunTrain},
      {"extract", "write penultimate representations of the test split", bcm::RunExtract},
      {"rank", "score and rank test examples", bcm::RunRank},
      {"eval", "MSE tables, ranking metrics and rank correlations", bcm::RunEval},
      {"plot", "render SVG charts from the eval artifacts", bcm::RunPlot},
      {"run-all", "run every stage and write the manifest", bcm::RunAll},
  };
  for (const Stage& s : stages) app.add_subcommand(s.name, s.help);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  bcm::ExperimentConfig config;
  try {
    config = bcm::LoadConfig(config_path);
    if (const char* env = std::getenv("BCM_OUT"); env != nullptr && *env != '\0') config.out_dir = env;
    if (!out_dir.empty()) config.out_dir = out_dir;
    if (!seeds_text.empty()) config.seeds = bcm::ParseSeedList(seeds_text);
    if (single_seed >= 0) config.seeds = {static_cast<std::uint64_t>(single_seed)};
    config.Validate();
  } catch (const bcm::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitUsage;
  }

  bcm::RunOptions options{.threads = threads, .log = {}};
  if (!quiet) options.log = [](const std::string& line) { std::cerr << line << '\n'; };
  for (const Stage& s : stages) {
    if (!app.got_subcommand(s.name)) continue;
    try {
      s.run(config, options);
    } catch (const bcm::ConfigError& e) {
      std::cerr << "config error: " << e.what() << '\n';
      return kExitUsage;
    } catch (const bcm::MissingInputError& e) {
      std::cerr << "error: " << e.what() << '\n';
      return kExitRuntime;
    } catch (const std::exception& e) {
      std::cerr << "error: " << s.name << ": " << e.what() << '\n';
      return kExitRuntime;
    }
  }
  return 0;
}
