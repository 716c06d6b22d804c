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

#include <random>

#include <gtest/gtest.h>

#include "bcm/datagen.hpp"
#include "bcm/expr.hpp"
#include "test_util.hpp"

namespace bcm {
namespace {

TEST(Expr, ParseRenderRoundTrip) {
  const char* texts[] = {"7", "-10", "( 1 + 2 )", "( ( 2 - -4 ) + ( 0 - 3 ) )", "( 3 - ( 2 - ( 0 + 0 ) ) )"};
  for (const char* t : texts) EXPECT_EQ(Render(Parse(t)), t);
}

TEST(Expr, TokenizerAcceptsUnspacedParens) {
  EXPECT_EQ(Render(Parse("((1 + 2) - 3)")), "( ( 1 + 2 ) - 3 )");
}

TEST(Expr, ParseErrorsCarryTokenPosition) {
  struct Case {
    const char* text;
    int position;
  };
  const Case cases[] = {{"( 1 * 2 )", 2}, {"( 1 + 11 )", 3}, {"( 1 + 2", 4}, {"( 1 + 2 ) )", 5}, {"", 0}};
  for (const Case& c : cases) {
    try {
      Parse(c.text);
      ADD_FAILURE() << "no error for '" << c.text << "'";
    } catch (const ParseError& e) {
      EXPECT_EQ(e.position(), c.position) << c.text << ": " << e.what();
    }
  }
}

TEST(Expr, HandComputedValues) {
  struct Case {
    const char* text;
    int standard;
    int adapted;
  };
  const Case cases[] = {
      {"7", 7, 7},
      {"0", 0, 0},
      {"( ( 2 - -4 ) + ( 0 - 3 ) )", 3, 5},
      {"( 0 - ( 0 + 0 ) )", 0, 0},
      {"( 5 + 0 )", 5, 10},
      {"( 5 - 0 )", 5, 0},
      {"( ( 0 + 3 ) + 4 )", 7, 7},
      {"( 3 - ( 2 - ( 0 + 0 ) ) )", 1, 7},
      {"( -2 + ( 1 - 0 ) )", -1, 1},
  };
  for (const Case& c : cases) {
    const ExprTree t = Parse(c.text);
    EXPECT_EQ(EvalStandard(t), c.standard) << c.text;
    EXPECT_EQ(EvalAdapted(t), c.adapted) << c.text;
    const LabeledExample ex = Label(t);
    EXPECT_EQ(ex.is_exception, c.standard != c.adapted) << c.text;
    EXPECT_EQ(IsException(ex), ex.is_exception);
  }
  EXPECT_FALSE(Label(Parse("( 0 - ( 0 + 0 ) )")).is_exception);
}

TEST(Expr, LengthAndLeftmost) {
  const ExprTree t = Parse("( ( -3 + 4 ) - ( 5 + ( 6 - 7 ) ) )");
  EXPECT_EQ(t.length(), 5);
  EXPECT_EQ(t.leftmost_numeral(), -3);
  EXPECT_EQ(t.node_count(), 9);
  EXPECT_EQ(t.subtree_end(0), 9);
}

TEST(ExprProperty, RandomTreesAgreeWithTextOracle) {
  std::mt19937_64 rng(12345);
  std::uniform_int_distribution<int> len(1, kMaxLength);
  for (int trial = 0; trial < 10000; ++trial) {
    const ExprTree t = SampleTree(len(rng), rng);
    const std::string text = Render(t);
    ASSERT_EQ(Parse(text), t) << text;
    ASSERT_EQ(Render(Parse(text)), text);
    testing::TextOracle oracle(text);
    ASSERT_EQ(EvalStandard(t), oracle.Eval(false)) << text;
    ASSERT_EQ(EvalAdapted(t), oracle.Eval(true)) << text;
    const LabeledExample ex = Label(t);
    if (!testing::ZeroInRootRight(t)) {
      ASSERT_EQ(ex.adapted_value, ex.standard_value) << text;
      ASSERT_FALSE(ex.is_exception);
    }
    ASSERT_EQ(ex.is_exception, ex.adapted_value != ex.standard_value);
  }
}

TEST(ExprProperty, LeftmostZeroNeverChangesValue) {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 2000; ++trial) {
    ExprTree t = SampleTree(2 + trial % 8, rng);
    if (t.leftmost_numeral() == 0) {
      EXPECT_EQ(EvalAdapted(t), EvalStandard(t)) << Render(t);
    }
  }
}

}  // namespace
}  // namespace bcm
