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

#ifndef BCM_TRAINING_HPP_
#define BCM_TRAINING_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "bcm/autodiff.hpp"
#include "bcm/datagen.hpp"
#include "bcm/kernels.hpp"
#include "bcm/treelstm.hpp"

namespace bcm {

struct TrainConfig {
  int epochs = 50;
  int batch_size = 32;
  double lr = 2e-4;
  double weight_decay = 0.01;
  double beta_warmup_fraction = 0.5;
  // Validation cadence in epochs.
  double eval_every = 0.5;
  double lambda_tre = 1.0;

  void Validate() const;
};

// Linear ramp from 0 to beta_target over the first beta_warmup_fraction of
// training, constant afterwards. `epoch` may be fractional.
double BetaSchedule(double epoch, double beta_target, const TrainConfig& config);

enum class TargetSet { kCompositional, kAdapted };
enum class Category { kRegular, kException };
std::string ToString(TargetSet t);
std::string ToString(Category c);

struct DynamicsRecord {
  double epoch = 0.0;
  TargetSet target_set = TargetSet::kAdapted;
  Category category = Category::kRegular;
  double mse = 0.0;
};

// Categories absent from the validation split produce no records.
using DynamicsLog = std::vector<DynamicsRecord>;

// Columns: epoch_frac,target_set,category,mse
void WriteDynamicsCsv(const std::filesystem::path& path, const DynamicsLog& log);
DynamicsLog ReadDynamicsCsv(const std::filesystem::path& path);

// Per-example objective: (prediction - adapted)^2 + beta * mean node KL
// (+ lambda * mse(penult, teacher_penult) when a teacher is given).
template <typename T>
struct LossParts {
  T task = 0;
  T info = 0;
  T tre = 0;
  T total = 0;
};

template <typename T>
LossParts<T> ExampleLoss(const LabeledExample& example, const ModelConfig& config,
                         const ad::ParamStore<T>& params, double beta_now, const ForwardOptions& options,
                         ad::Graph<T>& graph, ad::GradBuffer<T>* grads = nullptr, T grad_scale = T(1),
                         std::span<const float> teacher_penult = {}, double lambda_tre = 0.0);

// Mean of ExampleLoss over the batch; value only.
template <typename T>
T BatchLoss(std::span<const LabeledExample> batch, const ModelConfig& config,
            const ad::ParamStore<T>& params, double beta_now, const ForwardOptions& options);

// Deterministic per-example noise stream.
std::mt19937_64 ExampleRng(std::uint64_t seed, std::uint64_t step, std::uint64_t position);

// Accumulates d(mean batch loss)/d(params) into params' gradients. Examples
// are dealt round-robin to 8 gradient slots that are summed in slot order, so
// the result does not depend on thread count. Returns the batch's mean loss.
double AccumulateBatchGradient(std::span<const LabeledExample* const> batch,
                               const ModelConfig& config, ad::ParamStore<float>& params,
                               double beta_now, std::uint64_t seed, std::uint64_t step,
                               kernels::Execution exec,
                               std::span<const std::vector<float>* const> teacher_penults = {},
                               double lambda_tre = 0.0);

struct Predictions {
  std::vector<double> values;
  // Row-major N x head_hidden penultimate activations (filled on request).
  std::vector<float> penult;
  int penult_dim = 0;
};

Predictions Predict(const ModelConfig& config, const ad::ParamStore<float>& params,
                    const Dataset& data, bool with_penult = false,
                    kernels::Execution exec = kernels::Execution::kParallel);

// MSE of predictions against one target set, per category.
struct CategoryMse {
  std::optional<double> regular;
  std::optional<double> exception;
};
CategoryMse MseByCategory(const Dataset& data, std::span<const double> predictions, TargetSet targets);

struct TrainResult {
  ad::ParamStore<float> params;
  DynamicsLog log;
  // Mean training loss per epoch, computed during the epoch.
  std::vector<double> epoch_loss;
};

struct TrainInputs {
  const Dataset* train = nullptr;
  const Dataset* validation = nullptr;  // optional; drives the dynamics log
  std::uint64_t seed = 0;
  kernels::Execution exec = kernels::Execution::kParallel;
  std::function<void(const std::string&)> progress;
};

TrainResult Train(const ModelConfig& model, const TrainConfig& train, const TrainInputs& inputs);

struct TreResult {
  TrainResult run;
  // Per-example residual mse(student penult, teacher penult) on `score_set`.
  std::vector<double> residuals;
};

// Trains `student` against a frozen teacher whose final head layer is copied
// into the student and kept frozen. Loss adds lambda_tre * mse(penult, teacher).
TreResult TreTrain(const ModelConfig& teacher_config, const ad::ParamStore<float>& teacher,
                   const ModelConfig& student, const TrainConfig& train, const TrainInputs& inputs,
                   const Dataset& score_set);

std::vector<double> PenultResiduals(const Predictions& student, const Predictions& teacher);

}  // namespace bcm

#endif  // BCM_TRAINING_HPP_
