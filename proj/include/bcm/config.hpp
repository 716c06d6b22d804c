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

// Experiment configuration, read from an INI file:
//
//   schema_version = 1
//   [output]             dir
//   [data]               seed, exception_fraction,
//                        {train,valid,test}_lengths ("1-7" or "5,6,7"),
//                        {train,valid,test}_total or _per_length
//   [model]              embedding_dim, hidden_dim, head_hidden, sigma_floor,
//                        sigma_bias_init
//   [train]              epochs, batch_size, lr, weight_decay,
//                        beta_warmup_fraction, eval_every, lambda_tre, seeds
//   [bottleneck.<name>]  kind (dvib | dropout | hidden-dim) and beta, p or
//                        hidden_dim
//   [bcm]                methods (pp, tt), tt_variants, cca_k, cca_reg
//
// Unknown sections or keys are rejected.

#ifndef BCM_CONFIG_HPP_
#define BCM_CONFIG_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "bcm/datagen.hpp"
#include "bcm/metric.hpp"
#include "bcm/training.hpp"
#include "bcm/treelstm.hpp"

namespace bcm {

inline constexpr int kConfigSchemaVersion = 1;

struct VariantConfig {
  std::string name;
  ModelConfig model;
  std::string hyper;  // "beta=0.25", "p=0.5", "d=8"
};

struct BcmConfig {
  bool pp = true;
  bool tt = true;
  // Variants that also get a teacher-student run; empty means all.
  std::vector<std::string> tt_variants;
  PpOptions pp_options;
};

struct ExperimentConfig {
  std::filesystem::path out_dir = "out";
  DatasetSpec train;
  DatasetSpec valid;
  DatasetSpec test;
  ModelConfig base;
  std::vector<VariantConfig> variants;
  TrainConfig training;
  std::vector<std::uint64_t> seeds;
  BcmConfig bcm;

  const VariantConfig& variant(const std::string& name) const;
  bool wants_tt(const std::string& variant) const;
  void Validate() const;
};

// Throws ConfigError with the offending key on any problem.
ExperimentConfig ParseConfig(const std::string& text, const std::string& origin = "<config>");
ExperimentConfig LoadConfig(const std::filesystem::path& path);

// "1-7", "5,6,7", "1-3,5" -> sorted unique lengths.
std::vector<int> ParseLengthList(const std::string& text);
std::vector<std::uint64_t> ParseSeedList(const std::string& text);

}  // namespace bcm

#endif  // BCM_CONFIG_HPP_
