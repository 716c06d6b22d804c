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

#include "bcm/datagen.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

namespace bcm {

ExprTree SampleTree(int length, std::mt19937_64& rng) {
  if (length < 1 || length > kMaxLength) {
    throw std::out_of_range(fmt::format("length {} outside [1, {}]", length, kMaxLength));
  }
  if (length == 1) {
    std::uniform_int_distribution<int> numeral(kMinNumeral, kMaxNumeral);
    return ExprTree::Leaf(numeral(rng));
  }
  std::uniform_int_distribution<int> split(1, length - 1);
  std::uniform_int_distribution<int> coin(0, 1);
  const int left_length = split(rng);
  const Op op = coin(rng) == 0 ? Op::kPlus : Op::kMinus;
  ExprTree left = SampleTree(left_length, rng);
  ExprTree right = SampleTree(length - left_length, rng);
  return ExprTree::Combine(op, left, right);
}

std::vector<LengthQuota> PlanQuotas(const DatasetSpec& spec) {
  if (spec.lengths.empty()) throw ConfigError(spec.name + ": no lengths given");
  if (spec.exception_fraction < 0.0 || spec.exception_fraction > 1.0) {
    throw ConfigError(fmt::format("{}: exception_fraction {} outside [0, 1]", spec.name,
                                  spec.exception_fraction));
  }
  std::vector<int> lengths = spec.lengths;
  std::sort(lengths.begin(), lengths.end());
  if (std::adjacent_find(lengths.begin(), lengths.end()) != lengths.end()) {
    throw ConfigError(spec.name + ": duplicate lengths");
  }
  for (int len : lengths) {
    if (len < 1 || len > kMaxLength) {
      throw ConfigError(fmt::format("{}: length {} outside [1, {}]", spec.name, len, kMaxLength));
    }
  }
  const int n_lengths = static_cast<int>(lengths.size());
  std::vector<LengthQuota> quotas;
  for (int i = 0; i < n_lengths; ++i) {
    int count = spec.examples_per_length;
    if (count <= 0) {
      if (spec.total_count <= 0) throw ConfigError(spec.name + ": no example count given");
      count = spec.total_count / n_lengths + (i < spec.total_count % n_lengths ? 1 : 0);
    }
    quotas.push_back({lengths[i], count, 0});
  }

  int deficit = 0;
  for (LengthQuota& q : quotas) {
    const int wanted = static_cast<int>(std::lround(spec.exception_fraction * q.examples));
    if (q.length == 1) {
      deficit += wanted;
    } else {
      q.exceptions = wanted;
    }
  }
  if (deficit > 0) {
    auto shortest = std::find_if(quotas.begin(), quotas.end(),
                                 [](const LengthQuota& q) { return q.length >= 2; });
    if (shortest == quotas.end()) {
      throw ConfigError(fmt::format(
          "{}: exception_fraction {} is infeasible with only length-1 expressions", spec.name,
          spec.exception_fraction));
    }
    shortest->exceptions += deficit;
  }
  for (const LengthQuota& q : quotas) {
    if (q.exceptions > q.examples) {
      throw ConfigError(fmt::format("{}: {} exceptions requested at length {} but only {} examples",
                                    spec.name, q.exceptions, q.length, q.examples));
    }
  }
  return quotas;
}

Dataset GenerateSplit(const DatasetSpec& spec, const std::unordered_set<std::string>& exclude) {
  const std::vector<LengthQuota> quotas = PlanQuotas(spec);
  std::mt19937_64 rng(spec.seed);
  Dataset out;
  for (const LengthQuota& q : quotas) {
    int regular_left = q.examples - q.exceptions;
    int exception_left = q.exceptions;
    const long max_attempts = 2000L * q.examples + 100000L;
    long attempts = 0;
    while (regular_left + exception_left > 0) {
      if (++attempts > max_attempts) {
        throw ConfigError(fmt::format(
            "{}: could not fill length {} after {} draws ({} regular, {} exceptions missing)",
            spec.name, q.length, max_attempts, regular_left, exception_left));
      }
      LabeledExample ex = Label(SampleTree(q.length, rng));
      int& slot = ex.is_exception ? exception_left : regular_left;
      if (slot == 0 || exclude.contains(ex.text)) continue;
      --slot;
      out.push_back(std::move(ex));
    }
  }
  return out;
}

void WriteDataset(const std::filesystem::path& path, const Dataset& examples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  for (const LabeledExample& ex : examples) {
    out << ex.text << '\t' << ex.standard_value << '\t' << ex.adapted_value << '\t'
        << (ex.is_exception ? 1 : 0) << '\t' << ex.length << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

namespace {

int ParseIntField(std::string_view field, long line_no, std::string_view name) {
  int value = 0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc() || ptr != field.data() + field.size()) {
    throw FormatError(fmt::format("line {}: bad {} field '{}'", line_no, name, field), line_no);
  }
  return value;
}

}  // namespace

Dataset ReadDataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  Dataset out;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string_view> fields;
    std::string_view rest(line);
    for (std::size_t tab; (tab = rest.find('\t')) != std::string_view::npos;) {
      fields.push_back(rest.substr(0, tab));
      rest.remove_prefix(tab + 1);
    }
    fields.push_back(rest);
    if (fields.size() != 5) {
      throw FormatError(fmt::format("{}:{}: expected 5 fields, got {}", path.string(), line_no,
                                    fields.size()),
                        line_no);
    }
    ExprTree tree = [&] {
      try {
        return Parse(fields[0]);
      } catch (const ParseError& e) {
        throw FormatError(fmt::format("{}:{}: {}", path.string(), line_no, e.what()), line_no);
      }
    }();
    const int standard = ParseIntField(fields[1], line_no, "standard_value");
    const int adapted = ParseIntField(fields[2], line_no, "adapted_value");
    const int flag = ParseIntField(fields[3], line_no, "is_exception");
    const int length = ParseIntField(fields[4], line_no, "length");
    LabeledExample ex = Label(std::move(tree));
    if (ex.standard_value != standard || ex.adapted_value != adapted ||
        ex.is_exception != (flag != 0) || ex.length != length || (flag != 0 && flag != 1)) {
      throw FormatError(
          fmt::format("{}:{}: stored labels ({}, {}, {}, {}) disagree with re-evaluation "
                      "({}, {}, {}, {})",
                      path.string(), line_no, standard, adapted, flag, length, ex.standard_value,
                      ex.adapted_value, ex.is_exception ? 1 : 0, ex.length),
          line_no);
    }
    if (ex.length > kMaxLength) {
      throw FormatError(fmt::format("{}:{}: length {} exceeds {}", path.string(), line_no,
                                    ex.length, kMaxLength),
                        line_no);
    }
    out.push_back(std::move(ex));
  }
  return out;
}

std::unordered_set<std::string> CanonicalStrings(const Dataset& examples) {
  std::unordered_set<std::string> out;
  out.reserve(examples.size());
  for (const LabeledExample& ex : examples) out.insert(ex.text);
  return out;
}

}  // namespace bcm
