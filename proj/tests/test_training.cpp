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

#include <cmath>

#include <gtest/gtest.h>

#include "bcm/datagen.hpp"
#include "bcm/kernels.hpp"
#include "bcm/training.hpp"
#include "test_util.hpp"

namespace bcm {
namespace {

ModelConfig Tiny(BottleneckKind kind = BottleneckKind::kNone) {
  ModelConfig c;
  c.kind = kind;
  c.embedding_dim = 8;
  c.hidden_dim = 8;
  c.head_hidden = 10;
  return c;
}

Dataset TinyData(int n, std::uint64_t seed, std::vector<int> lengths = {1, 2, 3}) {
  return GenerateSplit({.name = "t", .lengths = std::move(lengths), .examples_per_length = 0, .total_count = n,
                        .exception_fraction = 0.12, .seed = seed});
}

TEST(BetaSchedule, LinearWarmupThenConstant) {
  TrainConfig t;
  t.epochs = 50;
  t.beta_warmup_fraction = 0.5;
  EXPECT_EQ(BetaSchedule(0, 0.25, t), 0.0);
  EXPECT_DOUBLE_EQ(BetaSchedule(12.5, 0.25, t), 0.125);
  EXPECT_DOUBLE_EQ(BetaSchedule(25, 0.25, t), 0.25);
  EXPECT_DOUBLE_EQ(BetaSchedule(49, 0.25, t), 0.25);
  t.beta_warmup_fraction = 0;
  EXPECT_DOUBLE_EQ(BetaSchedule(0, 0.25, t), 0.25);
}

TEST(TrainConfig, Validation) {
  TrainConfig t;
  t.batch_size = 0;
  EXPECT_THROW(t.Validate(), ConfigError);
  t = {};
  t.beta_warmup_fraction = 1.5;
  EXPECT_THROW(t.Validate(), ConfigError);
}

TEST(Loss, RecomposesFromParts) {
  ModelConfig c = Tiny(BottleneckKind::kDvib);
  c.beta = 0.3;
  const auto p = InitParams(c, 4).Cast<double>();
  const LabeledExample ex = Label(Parse("( ( 1 - 0 ) + ( 2 - 0 ) )"));
  ad::Graph<double> g;
  const auto parts = ExampleLoss(ex, c, p, 0.2, {}, g);
  EXPECT_NEAR(parts.total, parts.task + 0.2 * parts.info, 1e-12);
  EXPECT_GT(parts.info, 0.0);
  const auto plain = ExampleLoss(ex, c, p, 0.0, {}, g);
  EXPECT_EQ(plain.total, plain.task);

  // Non-DVIB kinds never add the information term.
  const ModelConfig base = Tiny();
  const auto q = InitParams(base, 4).Cast<double>();
  const auto b = ExampleLoss(ex, base, q, 0.5, {}, g);
  EXPECT_EQ(b.total, b.task);

  const double pred = [&] {
    ad::Graph<double> h;
    return Infer(c, p, ex.tree, h).prediction;
  }();
  EXPECT_NEAR(parts.task, (pred - ex.adapted_value) * (pred - ex.adapted_value), 1e-9);
}

TEST(Loss, PerfectPredictionIsZero) {
  const ModelConfig c = Tiny();
  auto p = InitParams(c, 4).Cast<double>();
  std::fill(p.at("head.2.W").value.begin(), p.at("head.2.W").value.end(), 0.0);
  p.at("head.2.b").value[0] = 7.0;
  ad::Graph<double> g;
  EXPECT_EQ(ExampleLoss(Label(Parse("( 3 + 4 )")), c, p, 0.0, {}, g).total, 0.0);
  const Dataset batch{Label(Parse("( 3 + 4 )")), Label(Parse("( 10 - 3 )"))};
  EXPECT_EQ(BatchLoss<double>(batch, c, p, 0.0, {}), 0.0);
}

TEST(ExampleRng, DeterministicAndDistinct) {
  auto a = ExampleRng(1, 2, 3);
  auto b = ExampleRng(1, 2, 3);
  auto c = ExampleRng(1, 2, 4);
  const auto va = a();
  EXPECT_EQ(va, b());
  EXPECT_NE(va, c());
}

TEST(BatchGradient, SerialAndParallelAgreeBitwise) {
  ModelConfig c = Tiny(BottleneckKind::kDvib);
  c.beta = 0.25;
  const Dataset data = TinyData(37, 3);
  std::vector<const LabeledExample*> batch;
  for (const auto& ex : data) batch.push_back(&ex);
  auto serial = InitParams(c, 8);
  auto parallel = InitParams(c, 8);
  kernels::SetThreads(4);
  const double ls = AccumulateBatchGradient(batch, c, serial, 0.1, 5, 0, kernels::Execution::kSerial);
  const double lp = AccumulateBatchGradient(batch, c, parallel, 0.1, 5, 0, kernels::Execution::kParallel);
  EXPECT_EQ(ls, lp);
  for (std::size_t i = 0; i < serial.size(); ++i) {
    ASSERT_EQ(serial[i].grad, parallel[i].grad) << serial.name(i);
    EXPECT_TRUE(serial[i].has_grad);
  }
}

TEST(Train, SerialAndParallelRunsAreIdentical) {
  ModelConfig c = Tiny(BottleneckKind::kDropout);
  c.dropout = 0.3;
  const Dataset train = TinyData(40, 1);
  const Dataset valid = TinyData(20, 2, {3});
  TrainConfig t;
  t.epochs = 2;
  t.batch_size = 8;
  t.lr = 1e-2;
  kernels::SetThreads(3);
  const auto a = Train(c, t, {.train = &train, .validation = &valid, .seed = 3, .exec = kernels::Execution::kSerial,
                              .progress = {}});
  const auto b = Train(c, t, {.train = &train, .validation = &valid, .seed = 3,
                              .exec = kernels::Execution::kParallel, .progress = {}});
  EXPECT_TRUE(a.params.SameValues(b.params));
  EXPECT_EQ(a.epoch_loss, b.epoch_loss);
}

TEST(Train, SmokeTrainMseDropsNinetyPercent) {
  const ModelConfig c = Tiny();
  const Dataset train = TinyData(100, 12);
  TrainConfig t;
  t.epochs = 30;
  t.batch_size = 8;
  t.lr = 1e-2;
  auto train_mse = [&](const ad::ParamStore<float>& p) {
    const auto pred = Predict(c, p, train);
    double s = 0;
    for (std::size_t i = 0; i < train.size(); ++i) {
      const double d = pred.values[i] - train[i].adapted_value;
      s += d * d;
    }
    return s / static_cast<double>(train.size());
  };
  const double before = train_mse(InitParams(c, 1));
  const auto r = Train(c, t, {.train = &train, .validation = nullptr, .seed = 1,
                              .exec = kernels::Execution::kParallel, .progress = {}});
  ASSERT_EQ(r.epoch_loss.size(), 30u);
  const double after = train_mse(r.params);
  EXPECT_LE(after, 0.1 * before) << before << " -> " << after;
}

TEST(Train, DynamicsLogCoversTargetsAndCategories) {
  const ModelConfig c = Tiny();
  const Dataset train = TinyData(40, 1);
  const Dataset valid = TinyData(60, 2, {3, 4});
  TrainConfig t;
  t.epochs = 2;
  t.batch_size = 8;
  const auto r = Train(c, t, {.train = &train, .validation = &valid, .seed = 3,
                              .exec = kernels::Execution::kParallel, .progress = {}});
  // Epochs 0, 0.5, 1, 1.5, 2 x 2 target sets x 2 categories.
  ASSERT_EQ(r.log.size(), 20u);
  for (std::size_t i = 1; i < r.log.size(); ++i) EXPECT_GE(r.log[i].epoch, r.log[i - 1].epoch);
  for (const auto& rec : r.log) EXPECT_TRUE(std::isfinite(rec.mse));
  EXPECT_EQ(r.log.front().epoch, 0.0);
  EXPECT_EQ(r.log.back().epoch, 2.0);

  const auto dir = testing::TempDir("dynamics");
  WriteDynamicsCsv(dir / "d.csv", r.log);
  const auto back = ReadDynamicsCsv(dir / "d.csv");
  ASSERT_EQ(back.size(), r.log.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].epoch, r.log[i].epoch);
    EXPECT_EQ(back[i].target_set, r.log[i].target_set);
    EXPECT_EQ(back[i].category, r.log[i].category);
    EXPECT_NEAR(back[i].mse, r.log[i].mse, 1e-8 * r.log[i].mse);
  }
}

TEST(Metrics, MseByCategoryHandComputed) {
  const Dataset data{Label(Parse("( 5 + 0 )")), Label(Parse("( 1 + 2 )")), Label(Parse("4"))};
  // adapted targets 10, 3, 4; standard 5, 3, 4
  const std::vector<double> preds{0, 0, 0};
  const auto adapted = MseByCategory(data, preds, TargetSet::kAdapted);
  EXPECT_DOUBLE_EQ(*adapted.exception, 100.0);
  EXPECT_DOUBLE_EQ(*adapted.regular, (9.0 + 16.0) / 2);
  const auto comp = MseByCategory(data, preds, TargetSet::kCompositional);
  EXPECT_DOUBLE_EQ(*comp.exception, 25.0);
  const Dataset regular_only{Label(Parse("( 1 + 2 )"))};
  const std::vector<double> one{3};
  EXPECT_FALSE(MseByCategory(regular_only, one, TargetSet::kAdapted).exception.has_value());
}

TEST(Metrics, PenultResidualsHandComputed) {
  Predictions a, b;
  a.penult_dim = b.penult_dim = 2;
  a.values = b.values = {0, 0};
  a.penult = {1, 2, 0, 0};
  b.penult = {1, 0, 3, 1};
  const auto r = PenultResiduals(a, b);
  ASSERT_EQ(r.size(), 2u);
  EXPECT_DOUBLE_EQ(r[0], 2.0);
  EXPECT_DOUBLE_EQ(r[1], 5.0);
  b.penult_dim = 4;
  b.penult = {0, 0, 0, 0};
  EXPECT_THROW(PenultResiduals(a, b), DimensionError);
}

TEST(TreTrain, SharesFrozenTeacherHead) {
  const ModelConfig base = Tiny();
  ModelConfig student = Tiny(BottleneckKind::kDvib);
  student.beta = 0.25;
  const Dataset train = TinyData(40, 1);
  const Dataset score = TinyData(12, 9, {4});
  TrainConfig t;
  t.epochs = 1;
  t.batch_size = 8;
  TrainInputs in{.train = &train, .validation = nullptr, .seed = 2, .exec = kernels::Execution::kParallel,
                 .progress = {}};
  const auto teacher = Train(base, t, in).params;
  const auto r = TreTrain(base, teacher, student, t, in, score);
  EXPECT_EQ(r.run.params.at("head.2.W").value, teacher.at("head.2.W").value);
  EXPECT_EQ(r.run.params.at("head.2.b").value, teacher.at("head.2.b").value);
  EXPECT_FALSE(r.run.params.at("head.2.W").requires_grad);
  ASSERT_EQ(r.residuals.size(), score.size());
  for (double v : r.residuals) EXPECT_GE(v, 0.0);
}

}  // namespace
}  // namespace bcm
