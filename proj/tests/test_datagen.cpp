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

#include <fstream>
#include <map>
#include <numeric>

#include <gtest/gtest.h>

#include "bcm/datagen.hpp"
#include "test_util.hpp"

namespace bcm {
namespace {

TEST(Quotas, FullTrainingSplit) {
  const DatasetSpec spec{.name = "train", .lengths = {1, 2, 3, 4, 5, 6, 7, 8, 9}, .examples_per_length = 0,
                         .total_count = 14903, .exception_fraction = 0.12, .seed = 1};
  const auto quotas = PlanQuotas(spec);
  ASSERT_EQ(quotas.size(), 9u);
  int examples = 0, exceptions = 0;
  for (const LengthQuota& q : quotas) {
    examples += q.examples;
    exceptions += q.exceptions;
    EXPECT_LE(q.exceptions, q.examples);
  }
  EXPECT_EQ(examples, 14903);
  EXPECT_EQ(quotas.front().exceptions, 0);
  EXPECT_NEAR(static_cast<double>(exceptions) / examples, 0.12, 0.005);
}

TEST(Quotas, PerLengthCountsAndInfeasible) {
  const DatasetSpec test{.name = "test", .lengths = {5, 6, 7, 8, 9}, .examples_per_length = 5000, .total_count = 0,
                         .exception_fraction = 0.12, .seed = 1};
  const auto q = PlanQuotas(test);
  EXPECT_EQ(std::accumulate(q.begin(), q.end(), 0, [](int s, const LengthQuota& x) { return s + x.examples; }),
            25000);
  for (const LengthQuota& x : q) EXPECT_EQ(x.exceptions, 600);

  DatasetSpec bad = test;
  bad.lengths = {1};
  EXPECT_THROW(PlanQuotas(bad), ConfigError);
  bad.exception_fraction = 0.0;
  EXPECT_NO_THROW(PlanQuotas(bad));
  bad.lengths = {0};
  EXPECT_THROW(PlanQuotas(bad), ConfigError);
  bad.lengths = {3};
  bad.exception_fraction = 1.5;
  EXPECT_THROW(PlanQuotas(bad), ConfigError);
}

TEST(Generate, HonorsQuotasAndIsDeterministic) {
  const DatasetSpec spec{.name = "train", .lengths = {1, 2, 3, 4, 5, 6, 7, 8, 9}, .examples_per_length = 0,
                         .total_count = 14903, .exception_fraction = 0.12, .seed = 42};
  const Dataset a = GenerateSplit(spec);
  ASSERT_EQ(a.size(), 14903u);
  std::map<int, std::pair<int, int>> per_length;  // exceptions, total
  int exceptions = 0;
  for (const LabeledExample& ex : a) {
    exceptions += ex.is_exception;
    per_length[ex.length].first += ex.is_exception;
    per_length[ex.length].second += 1;
    ASSERT_EQ(ex.is_exception, ex.standard_value != ex.adapted_value);
    ASSERT_EQ(ex.length, ex.tree.length());
  }
  EXPECT_NEAR(exceptions / 14903.0, 0.12, 0.005);
  for (const auto& [len, counts] : per_length) {
    if (len >= 3) {
      EXPECT_NEAR(static_cast<double>(counts.first) / counts.second, 0.12, 0.02) << len;
    }
  }
  const Dataset b = GenerateSplit(spec);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) ASSERT_EQ(a[i].text, b[i].text);
}

TEST(Generate, ZeroFractionAndExclusion) {
  const DatasetSpec spec{.name = "x", .lengths = {3, 4}, .examples_per_length = 300, .total_count = 0,
                         .exception_fraction = 0.0, .seed = 5};
  const Dataset first = GenerateSplit(spec);
  for (const LabeledExample& ex : first) EXPECT_FALSE(ex.is_exception);
  DatasetSpec other = spec;
  other.seed = 6;
  const auto excluded = CanonicalStrings(first);
  for (const LabeledExample& ex : GenerateSplit(other, excluded)) EXPECT_FALSE(excluded.contains(ex.text));
}

TEST(Generate, SampleTreeShapes) {
  std::mt19937_64 rng(3);
  for (int len = 1; len <= kMaxLength; ++len) {
    for (int i = 0; i < 50; ++i) {
      const ExprTree t = SampleTree(len, rng);
      EXPECT_EQ(t.length(), len);
      EXPECT_EQ(t.node_count(), 2 * len - 1);
    }
  }
  // Both children of a length-3 root get 1 or 2 leaves with equal odds.
  int left_single = 0;
  for (int i = 0; i < 4000; ++i) {
    const ExprTree t = SampleTree(3, rng);
    left_single += t.node(t.root().left).leaf;
  }
  EXPECT_NEAR(left_single / 4000.0, 0.5, 0.03);
}

TEST(Tsv, RoundTrip) {
  const auto dir = testing::TempDir("tsv");
  const DatasetSpec spec{.name = "x", .lengths = {1, 2, 5}, .examples_per_length = 40, .total_count = 0,
                         .exception_fraction = 0.2, .seed = 8};
  const Dataset data = GenerateSplit(spec);
  WriteDataset(dir / "d.tsv", data);
  const Dataset back = ReadDataset(dir / "d.tsv");
  ASSERT_EQ(back.size(), data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    EXPECT_EQ(back[i].tree, data[i].tree);
    EXPECT_EQ(back[i].text, data[i].text);
    EXPECT_EQ(back[i].standard_value, data[i].standard_value);
    EXPECT_EQ(back[i].adapted_value, data[i].adapted_value);
    EXPECT_EQ(back[i].is_exception, data[i].is_exception);
    EXPECT_EQ(back[i].length, data[i].length);
  }
}

TEST(Tsv, WrongLabelIsRejectedWithLine) {
  const auto dir = testing::TempDir("tsv_bad");
  {
    std::ofstream out(dir / "bad.tsv");
    out << "( 1 + 2 )\t3\t3\t0\t2\n";
    out << "( 5 + 0 )\t6\t10\t1\t2\n";  // standard value is 5
  }
  try {
    ReadDataset(dir / "bad.tsv");
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.line(), 2);
  }
  {
    std::ofstream out(dir / "short.tsv");
    out << "( 1 + 2 )\t3\t3\n";
  }
  EXPECT_THROW(ReadDataset(dir / "short.tsv"), FormatError);
  EXPECT_THROW(ReadDataset(dir / "missing.tsv"), IoError);
}

}  // namespace
}  // namespace bcm
