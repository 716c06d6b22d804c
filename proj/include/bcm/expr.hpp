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

#ifndef BCM_EXPR_HPP_
#define BCM_EXPR_HPP_

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "bcm/errors.hpp"

namespace bcm {

inline constexpr int kMinNumeral = -10;
inline constexpr int kMaxNumeral = 10;
inline constexpr int kMaxLength = 9;

enum class Op : std::uint8_t { kPlus, kMinus };

char OpSymbol(Op op);

struct ExprNode {
  bool leaf = true;
  Op op = Op::kPlus;
  int numeral = 0;
  int left = -1;
  int right = -1;

  // Leaves keep op == kPlus and internal nodes keep numeral == 0.
  bool operator==(const ExprNode&) const = default;
};

// Binary arithmetic expression tree. Nodes are stored in preorder, so a node's
// id is its preorder index and node 0 is the root.
class ExprTree {
 public:
  static ExprTree Leaf(int numeral);
  static ExprTree Combine(Op op, const ExprTree& left, const ExprTree& right);

  const std::vector<ExprNode>& nodes() const { return nodes_; }
  const ExprNode& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }
  int node_count() const { return static_cast<int>(nodes_.size()); }
  const ExprNode& root() const { return nodes_.front(); }

  // Number of numerals.
  int length() const;
  int leftmost_numeral() const;
  // Node ids of the subtree rooted at `id` form the half-open range
  // [id, subtree_end(id)).
  int subtree_end(int id) const;

  bool operator==(const ExprTree&) const = default;

 private:
  ExprTree() = default;
  std::vector<ExprNode> nodes_;
};

// Parses `NUM | ( EXPR OP EXPR )` with single-space separated tokens.
ExprTree Parse(std::string_view text);
std::string Render(const ExprTree& tree);

// Ordinary integer arithmetic.
int EvalStandard(const ExprTree& tree);
// Value of every node (indexed by node id) under ordinary arithmetic.
std::vector<int> AnnotateStandard(const ExprTree& tree);

// Exception semantics: every `0` leaf inside the root's right subtree takes the
// literal numeral of the tree's leftmost leaf.
int EvalAdapted(const ExprTree& tree);

struct LabeledExample {
  ExprTree tree;
  std::string text;
  int standard_value = 0;
  int adapted_value = 0;
  bool is_exception = false;
  int length = 0;
};

LabeledExample Label(ExprTree tree);
bool IsException(const LabeledExample& example);

}  // namespace bcm

#endif  // BCM_EXPR_HPP_
