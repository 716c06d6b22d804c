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

#include "bcm/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <boost/algorithm/string/trim.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>

#include "bcm/errors.hpp"

namespace bcm {
namespace {

namespace pt = boost::property_tree;

std::vector<std::string> SplitList(const std::string& text) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ',')) {
    boost::algorithm::trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename T>
T ParseNumber(const std::string& text, const std::string& where) {
  T value{};
  const char* first = text.data();
  const char* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) {
    throw ConfigError(fmt::format("{}: expected a number, got '{}'", where, text));
  }
  return value;
}

// Reads one section, remembering which keys were consumed so leftovers can be
// reported as unknown.
class Section {
 public:
  Section(const pt::ptree* tree, std::string where) : tree_(tree), where_(std::move(where)) {}

  bool has(const std::string& key) const { return tree_ != nullptr && tree_->find(key) != tree_->not_found(); }

  std::string text(const std::string& key) {
    used_.insert(key);
    auto it = tree_->find(key);
    std::string v = it->second.get_value<std::string>();
    boost::algorithm::trim(v);
    return v;
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    if (!has(key)) return;
    const std::string v = text(key);
    if constexpr (std::is_same_v<T, std::string>) {
      out = v;
    } else {
      out = ParseNumber<T>(v, fmt::format("{} {}", where_, key));
    }
  }

  std::string where(const std::string& key) const { return fmt::format("{} {}", where_, key); }

  void RejectUnknown() const {
    if (tree_ == nullptr) return;
    for (const auto& [key, child] : *tree_) {
      if (!used_.contains(key)) throw ConfigError(fmt::format("{}: unknown key '{}'", where_, key));
      if (!child.empty()) throw ConfigError(fmt::format("{}: key '{}' is nested", where_, key));
    }
  }

 private:
  const pt::ptree* tree_;
  std::string where_;
  std::set<std::string> used_;
};

void ReadSplit(Section& s, const std::string& prefix, DatasetSpec& spec) {
  spec.name = prefix;
  if (s.has(prefix + "_lengths")) spec.lengths = ParseLengthList(s.text(prefix + "_lengths"));
  if (s.has(prefix + "_total")) {
    s.get(prefix + "_total", spec.total_count);
    spec.examples_per_length = 0;
  }
  if (s.has(prefix + "_per_length")) {
    s.get(prefix + "_per_length", spec.examples_per_length);
    spec.total_count = 0;
  }
}

ExperimentConfig Defaults() {
  ExperimentConfig c;
  c.train = {.name = "train", .lengths = {1, 2, 3, 4, 5, 6, 7, 8, 9}, .examples_per_length = 0, .total_count = 14903,
             .exception_fraction = 0.12, .seed = 0};
  c.valid = {.name = "valid", .lengths = {3, 4, 5, 6, 7, 8, 9}, .examples_per_length = 0, .total_count = 2100,
             .exception_fraction = 0.12, .seed = 0};
  c.test = {.name = "test", .lengths = {5, 6, 7, 8, 9}, .examples_per_length = 5000, .total_count = 0,
            .exception_fraction = 0.12, .seed = 0};
  c.seeds = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  return c;
}

}  // namespace

std::vector<int> ParseLengthList(const std::string& text) {
  std::set<int> out;
  for (const std::string& item : SplitList(text)) {
    const auto dash = item.find('-', 1);
    if (dash == std::string::npos) {
      out.insert(ParseNumber<int>(item, "length list"));
      continue;
    }
    const int lo = ParseNumber<int>(item.substr(0, dash), "length list");
    const int hi = ParseNumber<int>(item.substr(dash + 1), "length list");
    if (lo > hi) throw ConfigError(fmt::format("length range '{}' is reversed", item));
    for (int l = lo; l <= hi; ++l) out.insert(l);
  }
  if (out.empty()) throw ConfigError("empty length list");
  for (int l : out) {
    if (l < 1 || l > kMaxLength) throw ConfigError(fmt::format("length {} outside [1, {}]", l, kMaxLength));
  }
  return {out.begin(), out.end()};
}

std::vector<std::uint64_t> ParseSeedList(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  for (const std::string& item : SplitList(text)) seeds.push_back(ParseNumber<std::uint64_t>(item, "seed list"));
  if (seeds.empty()) throw ConfigError("empty seed list");
  return seeds;
}

const VariantConfig& ExperimentConfig::variant(const std::string& name) const {
  for (const VariantConfig& v : variants) {
    if (v.name == name) return v;
  }
  throw ConfigError("unknown bottleneck variant '" + name + "'");
}

bool ExperimentConfig::wants_tt(const std::string& name) const {
  if (!bcm.tt) return false;
  if (bcm.tt_variants.empty()) return true;
  return std::find(bcm.tt_variants.begin(), bcm.tt_variants.end(), name) != bcm.tt_variants.end();
}

void ExperimentConfig::Validate() const {
  if (out_dir.empty()) throw ConfigError("[output] dir is empty");
  base.Validate();
  if (base.kind != BottleneckKind::kNone) throw ConfigError("the base model must not carry a bottleneck");
  training.Validate();
  if (seeds.empty()) throw ConfigError("[train] seeds is empty");
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size()) {
    throw ConfigError("[train] seeds must be distinct");
  }
  std::set<std::string> names;
  for (const VariantConfig& v : variants) {
    v.model.Validate();
    if (v.model.kind == BottleneckKind::kNone) throw ConfigError("[bottleneck." + v.name + "] needs a kind");
    if (!names.insert(v.name).second) throw ConfigError("duplicate bottleneck " + v.name);
    if (v.name == "base" || v.name.starts_with("tt-")) throw ConfigError("reserved bottleneck name " + v.name);
  }
  for (const std::string& name : bcm.tt_variants) {
    if (!names.contains(name)) throw ConfigError("[bcm] tt_variants names unknown bottleneck '" + name + "'");
  }
  if (!bcm.pp && !bcm.tt) throw ConfigError("[bcm] methods selects nothing");
  if (bcm.pp_options.reg < 0) throw ConfigError("[bcm] cca_reg must be >= 0");
  for (const DatasetSpec* s : {&train, &valid, &test}) {
    PlanQuotas(*s);  // throws ConfigError when infeasible
  }
}

ExperimentConfig ParseConfig(const std::string& text, const std::string& origin) {
  pt::ptree tree;
  try {
    std::istringstream in(text);
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(fmt::format("{}: line {}: {}", origin, e.line(), e.message()));
  }
  ExperimentConfig c = Defaults();

  int schema = 0;
  bool saw_schema = false;
  std::vector<std::string> seen_variants;
  for (const auto& [key, child] : tree) {
    if (child.empty()) {
      if (key != "schema_version") throw ConfigError(fmt::format("{}: unknown top-level key '{}'", origin, key));
      schema = ParseNumber<int>(child.get_value<std::string>(), origin + " schema_version");
      saw_schema = true;
      continue;
    }
    Section s(&child, fmt::format("{} [{}]", origin, key));
    if (key == "output") {
      std::string dir;
      s.get("dir", dir);
      if (!dir.empty()) c.out_dir = dir;
    } else if (key == "data") {
      std::uint64_t seed = 0;
      s.get("seed", seed);
      double fraction = 0.12;
      s.get("exception_fraction", fraction);
      ReadSplit(s, "train", c.train);
      ReadSplit(s, "valid", c.valid);
      ReadSplit(s, "test", c.test);
      // Distinct streams per split.
      c.train.seed = seed * 3 + 0;
      c.valid.seed = seed * 3 + 1;
      c.test.seed = seed * 3 + 2;
      for (DatasetSpec* spec : {&c.train, &c.valid, &c.test}) spec->exception_fraction = fraction;
    } else if (key == "model") {
      s.get("embedding_dim", c.base.embedding_dim);
      s.get("hidden_dim", c.base.hidden_dim);
      s.get("head_hidden", c.base.head_hidden);
      s.get("sigma_floor", c.base.sigma_floor);
      s.get("sigma_bias_init", c.base.sigma_bias_init);
    } else if (key == "train") {
      s.get("epochs", c.training.epochs);
      s.get("batch_size", c.training.batch_size);
      s.get("lr", c.training.lr);
      s.get("weight_decay", c.training.weight_decay);
      s.get("beta_warmup_fraction", c.training.beta_warmup_fraction);
      s.get("eval_every", c.training.eval_every);
      s.get("lambda_tre", c.training.lambda_tre);
      if (s.has("seeds")) c.seeds = ParseSeedList(s.text("seeds"));
    } else if (key == "bcm") {
      if (s.has("methods")) {
        c.bcm.pp = c.bcm.tt = false;
        for (const std::string& m : SplitList(s.text("methods"))) {
          if (m == "pp") {
            c.bcm.pp = true;
          } else if (m == "tt") {
            c.bcm.tt = true;
          } else {
            throw ConfigError(fmt::format("{}: unknown method '{}' (expected pp, tt)", s.where("methods"), m));
          }
        }
      }
      if (s.has("tt_variants")) c.bcm.tt_variants = SplitList(s.text("tt_variants"));
      s.get("cca_k", c.bcm.pp_options.k);
      s.get("cca_reg", c.bcm.pp_options.reg);
    } else if (key.starts_with("bottleneck.")) {
      seen_variants.push_back(key.substr(std::string("bottleneck.").size()));
      // Filled after [model] is known; see below.
      continue;
    } else {
      throw ConfigError(fmt::format("{}: unknown section [{}]", origin, key));
    }
    s.RejectUnknown();
  }
  if (!saw_schema) throw ConfigError(origin + ": missing schema_version");
  if (schema != kConfigSchemaVersion) {
    throw ConfigError(fmt::format("{}: schema_version {} unsupported (expected {})", origin, schema,
                                  kConfigSchemaVersion));
  }

  for (const std::string& name : seen_variants) {
    Section s(&tree.find("bottleneck." + name)->second, fmt::format("{} [bottleneck.{}]", origin, name));
    if (!s.has("kind")) throw ConfigError(s.where("kind") + ": missing");
    VariantConfig v{.name = name, .model = c.base, .hyper = {}};
    try {
      v.model.kind = ParseBottleneckKind(s.text("kind"));
    } catch (const std::exception& e) {
      throw ConfigError(fmt::format("{}: {}", s.where("kind"), e.what()));
    }
    switch (v.model.kind) {
      case BottleneckKind::kDvib:
        s.get("beta", v.model.beta);
        v.hyper = fmt::format("beta={}", v.model.beta);
        break;
      case BottleneckKind::kDropout:
        s.get("p", v.model.dropout);
        v.hyper = fmt::format("p={}", v.model.dropout);
        break;
      case BottleneckKind::kHiddenDim:
        if (!s.has("hidden_dim")) throw ConfigError(s.where("hidden_dim") + ": missing");
        s.get("hidden_dim", v.model.hidden_dim);
        v.hyper = fmt::format("d={}", v.model.hidden_dim);
        break;
      case BottleneckKind::kNone:
        throw ConfigError(s.where("kind") + ": a bottleneck section needs a bottleneck kind");
    }
    s.RejectUnknown();
    c.variants.push_back(std::move(v));
  }
  c.Validate();
  return c;
}

ExperimentConfig LoadConfig(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return ParseConfig(text.str(), path.string());
}

}  // namespace bcm
