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

#include "bcm/expr.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>

#include <fmt/format.h>

namespace bcm {

char OpSymbol(Op op) { return op == Op::kPlus ? '+' : '-'; }

ExprTree ExprTree::Leaf(int numeral) {
  if (numeral < kMinNumeral || numeral > kMaxNumeral) {
    throw std::out_of_range(fmt::format("numeral {} outside [{}, {}]", numeral,
                                        kMinNumeral, kMaxNumeral));
  }
  ExprTree t;
  t.nodes_.push_back(ExprNode{.leaf = true, .numeral = numeral});
  return t;
}

ExprTree ExprTree::Combine(Op op, const ExprTree& left, const ExprTree& right) {
  ExprTree t;
  t.nodes_.reserve(1 + left.nodes_.size() + right.nodes_.size());
  const int left_offset = 1;
  const int right_offset = 1 + left.node_count();
  t.nodes_.push_back(ExprNode{.leaf = false,
                              .op = op,
                              .left = left_offset,
                              .right = right_offset});
  auto append = [&t](const ExprTree& sub, int offset) {
    for (ExprNode n : sub.nodes_) {
      if (!n.leaf) {
        n.left += offset;
        n.right += offset;
      }
      t.nodes_.push_back(n);
    }
  };
  append(left, left_offset);
  append(right, right_offset);
  return t;
}

int ExprTree::length() const {
  return static_cast<int>(
      std::count_if(nodes_.begin(), nodes_.end(), [](const ExprNode& n) { return n.leaf; }));
}

int ExprTree::leftmost_numeral() const {
  int id = 0;
  while (!node(id).leaf) id = node(id).left;
  return node(id).numeral;
}

int ExprTree::subtree_end(int id) const {
  // In preorder the subtree ends after its rightmost descendant.
  while (!node(id).leaf) id = node(id).right;
  return id + 1;
}

namespace {

struct Token {
  std::string_view text;
  int position;
};

std::vector<Token> Tokenize(std::string_view text) {
  std::vector<Token> tokens;
  std::size_t i = 0;
  while (i < text.size()) {
    const char ch = text[i];
    if (std::isspace(static_cast<unsigned char>(ch))) {
      ++i;
      continue;
    }
    const int pos = static_cast<int>(tokens.size());
    if (ch == '(' || ch == ')') {
      tokens.push_back({text.substr(i, 1), pos});
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j])) &&
           text[j] != '(' && text[j] != ')') {
      ++j;
    }
    tokens.push_back({text.substr(i, j - i), pos});
    i = j;
  }
  return tokens;
}

bool IsNumeralToken(std::string_view tok) {
  std::size_t start = (tok.size() > 1 && tok[0] == '-') ? 1 : 0;
  if (start == tok.size()) return false;
  return std::all_of(tok.begin() + static_cast<std::ptrdiff_t>(start), tok.end(),
                     [](char c) { return std::isdigit(static_cast<unsigned char>(c)); });
}

class Parser {
 public:
  explicit Parser(std::vector<Token> tokens) : tokens_(std::move(tokens)) {}

  ExprTree ParseAll() {
    if (tokens_.empty()) throw ParseError("empty expression", 0);
    ExprTree tree = ParseExpr();
    if (next_ != tokens_.size()) {
      Fail("trailing token", tokens_[next_]);
    }
    return tree;
  }

 private:
  [[noreturn]] void Fail(std::string_view what, const Token& tok) {
    throw ParseError(fmt::format("{} '{}' at token {}", what, tok.text, tok.position),
                     tok.position);
  }

  const Token& Take() {
    if (next_ >= tokens_.size()) {
      const int pos = static_cast<int>(tokens_.size());
      throw ParseError(fmt::format("unexpected end of input at token {}", pos), pos);
    }
    return tokens_[next_++];
  }

  ExprTree ParseExpr() {
    const Token& tok = Take();
    if (tok.text == "(") {
      ExprTree left = ParseExpr();
      const Token& op_tok = Take();
      Op op;
      if (op_tok.text == "+") {
        op = Op::kPlus;
      } else if (op_tok.text == "-") {
        op = Op::kMinus;
      } else {
        Fail("expected operator, got", op_tok);
      }
      ExprTree right = ParseExpr();
      const Token& close = Take();
      if (close.text != ")") Fail("expected ')', got", close);
      return ExprTree::Combine(op, left, right);
    }
    if (!IsNumeralToken(tok.text)) {
      if (tok.text == ")") Fail("unbalanced parenthesis", tok);
      Fail("unknown token", tok);
    }
    int value = 0;
    auto [ptr, ec] = std::from_chars(tok.text.data(), tok.text.data() + tok.text.size(), value);
    if (ec != std::errc() || value < kMinNumeral || value > kMaxNumeral) {
      Fail("numeral out of range", tok);
    }
    return ExprTree::Leaf(value);
  }

  std::vector<Token> tokens_;
  std::size_t next_ = 0;
};

void RenderInto(const ExprTree& tree, int id, std::string& out) {
  const ExprNode& n = tree.node(id);
  if (n.leaf) {
    out += std::to_string(n.numeral);
    return;
  }
  out += "( ";
  RenderInto(tree, n.left, out);
  out += ' ';
  out += OpSymbol(n.op);
  out += ' ';
  RenderInto(tree, n.right, out);
  out += " )";
}

int Apply(Op op, int a, int b) { return op == Op::kPlus ? a + b : a - b; }

// Children have larger preorder ids than their parent, so a reverse sweep is a
// valid bottom-up order.
std::vector<int> Annotate(const ExprTree& tree, const std::vector<int>& leaf_values) {
  std::vector<int> values(leaf_values);
  for (int id = tree.node_count() - 1; id >= 0; --id) {
    const ExprNode& n = tree.node(id);
    if (!n.leaf) values[id] = Apply(n.op, values[n.left], values[n.right]);
  }
  return values;
}

}  // namespace

ExprTree Parse(std::string_view text) { return Parser(Tokenize(text)).ParseAll(); }

std::string Render(const ExprTree& tree) {
  std::string out;
  RenderInto(tree, 0, out);
  return out;
}

std::vector<int> AnnotateStandard(const ExprTree& tree) {
  std::vector<int> leaves(static_cast<std::size_t>(tree.node_count()), 0);
  for (int id = 0; id < tree.node_count(); ++id) {
    if (tree.node(id).leaf) leaves[id] = tree.node(id).numeral;
  }
  return Annotate(tree, leaves);
}

int EvalStandard(const ExprTree& tree) { return AnnotateStandard(tree).front(); }

int EvalAdapted(const ExprTree& tree) {
  std::vector<int> leaves(static_cast<std::size_t>(tree.node_count()), 0);
  for (int id = 0; id < tree.node_count(); ++id) {
    if (tree.node(id).leaf) leaves[id] = tree.node(id).numeral;
  }
  if (!tree.root().leaf) {
    const int replacement = tree.leftmost_numeral();
    const int begin = tree.root().right;
    const int end = tree.subtree_end(begin);
    for (int id = begin; id < end; ++id) {
      const ExprNode& n = tree.node(id);
      if (n.leaf && n.numeral == 0) leaves[id] = replacement;
    }
  }
  return Annotate(tree, leaves).front();
}

LabeledExample Label(ExprTree tree) {
  LabeledExample ex{.tree = std::move(tree), .text = {}};
  ex.text = Render(ex.tree);
  ex.standard_value = EvalStandard(ex.tree);
  ex.adapted_value = EvalAdapted(ex.tree);
  ex.is_exception = ex.adapted_value != ex.standard_value;
  ex.length = ex.tree.length();
  return ex;
}

bool IsException(const LabeledExample& example) {
  return example.adapted_value != example.standard_value;
}

}  // namespace bcm
