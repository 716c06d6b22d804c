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

#ifndef BCM_DATAGEN_HPP_
#define BCM_DATAGEN_HPP_

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <unordered_set>
#include <vector>

#include "bcm/expr.hpp"

namespace bcm {

using Dataset = std::vector<LabeledExample>;

struct DatasetSpec {
  std::string name;
  std::vector<int> lengths;
  // Exactly one of the two counts is used: per-length when > 0, otherwise the
  // total is spread evenly over `lengths` (remainder to the shortest lengths).
  int examples_per_length = 0;
  int total_count = 0;
  double exception_fraction = 0.0;
  std::uint64_t seed = 0;
};

// Tree with exactly `length` numerals. The shape splits k leaves into
// (j, k - j) with j uniform on [1, k - 1]; operators and numerals are uniform.
ExprTree SampleTree(int length, std::mt19937_64& rng);

// Per-length example and exception quotas implied by a spec. Length 1 cannot
// hold an exception, so its share moves to the shortest length >= 2.
struct LengthQuota {
  int length = 0;
  int examples = 0;
  int exceptions = 0;
};
std::vector<LengthQuota> PlanQuotas(const DatasetSpec& spec);

// Rejection-samples a split honoring the per-length quotas. Canonical strings
// listed in `exclude` are never emitted.
Dataset GenerateSplit(const DatasetSpec& spec,
                      const std::unordered_set<std::string>& exclude = {});

// Tab separated: text, standard_value, adapted_value, is_exception (0/1), length.
void WriteDataset(const std::filesystem::path& path, const Dataset& examples);
Dataset ReadDataset(const std::filesystem::path& path);

std::unordered_set<std::string> CanonicalStrings(const Dataset& examples);

}  // namespace bcm

#endif  // BCM_DATAGEN_HPP_
