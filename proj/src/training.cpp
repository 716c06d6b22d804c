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

#include "bcm/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace bcm {

void TrainConfig::Validate() const {
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (batch_size <= 0) throw ConfigError("batch_size must be positive");
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
  if (!(beta_warmup_fraction >= 0.0 && beta_warmup_fraction <= 1.0)) {
    throw ConfigError("beta_warmup_fraction outside [0, 1]");
  }
  if (!(eval_every > 0.0)) throw ConfigError("eval_every must be positive");
  if (!(lambda_tre >= 0.0)) throw ConfigError("lambda_tre must be >= 0");
}

double BetaSchedule(double epoch, double beta_target, const TrainConfig& config) {
  const double warmup = config.beta_warmup_fraction * config.epochs;
  if (warmup <= 0.0) return beta_target;
  return beta_target * std::clamp(epoch / warmup, 0.0, 1.0);
}

std::string ToString(TargetSet t) {
  return t == TargetSet::kCompositional ? "compositional" : "adapted";
}

std::string ToString(Category c) { return c == Category::kRegular ? "regular" : "exception"; }

void WriteDynamicsCsv(const std::filesystem::path& path, const DynamicsLog& log) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "epoch_frac,target_set,category,mse\n";
  for (const DynamicsRecord& r : log) {
    out << fmt::format("{:.6f},{},{},{:.9g}\n", r.epoch, ToString(r.target_set), ToString(r.category), r.mse);
  }
  if (!out) throw IoError("write failed for " + path.string());
}

DynamicsLog ReadDynamicsCsv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  DynamicsLog log;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 || line.empty()) continue;
    std::istringstream ls(line);
    std::string epoch, target, category, mse;
    if (!std::getline(ls, epoch, ',') || !std::getline(ls, target, ',') ||
        !std::getline(ls, category, ',') || !std::getline(ls, mse)) {
      throw FormatError(fmt::format("{}: row {} has too few columns", path.string(), line_no), line_no);
    }
    DynamicsRecord r;
    try {
      r.epoch = std::stod(epoch);
      r.mse = std::stod(mse);
    } catch (const std::exception&) {
      throw FormatError(fmt::format("{}: row {} has a non-numeric field", path.string(), line_no), line_no);
    }
    if (target == "compositional") {
      r.target_set = TargetSet::kCompositional;
    } else if (target == "adapted") {
      r.target_set = TargetSet::kAdapted;
    } else {
      throw FormatError(fmt::format("{}: row {} has unknown target set '{}'", path.string(), line_no, target),
                        line_no);
    }
    if (category == "regular") {
      r.category = Category::kRegular;
    } else if (category == "exception") {
      r.category = Category::kException;
    } else {
      throw FormatError(fmt::format("{}: row {} has unknown category '{}'", path.string(), line_no, category),
                        line_no);
    }
    log.push_back(r);
  }
  return log;
}

template <typename T>
LossParts<T> ExampleLoss(const LabeledExample& example, const ModelConfig& config,
                         const ad::ParamStore<T>& params, double beta_now, const ForwardOptions& options,
                         ad::Graph<T>& graph, ad::GradBuffer<T>* grads, T grad_scale,
                         std::span<const float> teacher_penult, double lambda_tre) {
  graph.Clear();
  TreeLstm<T> model(config, params, grads, graph);
  TreeOutput<T> out = model.Forward(example.tree, options);
  const T target = static_cast<T>(example.adapted_value);
  auto target_var = graph.Constant(std::span<const T>(&target, 1));
  auto loss = graph.Mse(out.prediction, target_var);

  LossParts<T> parts;
  parts.task = graph.scalar(loss);
  if (out.info_loss.valid()) parts.info = graph.scalar(out.info_loss);
  if (config.uses_kl() && out.info_loss.valid() && beta_now > 0.0) {
    loss = graph.Add(loss, graph.Scale(out.info_loss, static_cast<T>(beta_now)));
  }
  if (!teacher_penult.empty()) {
    std::vector<T> teacher(teacher_penult.begin(), teacher_penult.end());
    if (graph.shape(out.penult).size() != static_cast<int>(teacher.size())) {
      throw DimensionError(fmt::format("penultimate size {} does not match teacher size {}",
                                       graph.shape(out.penult).size(), teacher.size()));
    }
    auto tre = graph.Mse(out.penult, graph.Constant(teacher));
    parts.tre = graph.scalar(tre);
    if (lambda_tre > 0.0) loss = graph.Add(loss, graph.Scale(tre, static_cast<T>(lambda_tre)));
  }
  parts.total = graph.scalar(loss);
  if (grads != nullptr) graph.Backward(loss, grad_scale);
  return parts;
}

template LossParts<float> ExampleLoss(const LabeledExample&, const ModelConfig&, const ad::ParamStore<float>&,
                                      double, const ForwardOptions&, ad::Graph<float>&, ad::GradBuffer<float>*,
                                      float, std::span<const float>, double);
template LossParts<double> ExampleLoss(const LabeledExample&, const ModelConfig&,
                                       const ad::ParamStore<double>&, double, const ForwardOptions&,
                                       ad::Graph<double>&, ad::GradBuffer<double>*, double,
                                       std::span<const float>, double);

template <typename T>
T BatchLoss(std::span<const LabeledExample> batch, const ModelConfig& config, const ad::ParamStore<T>& params,
            double beta_now, const ForwardOptions& options) {
  if (batch.empty()) throw std::invalid_argument("batch_loss: empty batch");
  ad::Graph<T> graph;
  T total = 0;
  for (const LabeledExample& ex : batch) {
    total += ExampleLoss(ex, config, params, beta_now, options, graph).total;
  }
  return total / static_cast<T>(batch.size());
}

template float BatchLoss(std::span<const LabeledExample>, const ModelConfig&, const ad::ParamStore<float>&,
                         double, const ForwardOptions&);
template double BatchLoss(std::span<const LabeledExample>, const ModelConfig&, const ad::ParamStore<double>&,
                          double, const ForwardOptions&);

std::mt19937_64 ExampleRng(std::uint64_t seed, std::uint64_t step, std::uint64_t position) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(step), static_cast<std::uint32_t>(step >> 32),
                    static_cast<std::uint32_t>(position)};
  return std::mt19937_64(seq);
}

double AccumulateBatchGradient(std::span<const LabeledExample* const> batch, const ModelConfig& config,
                               ad::ParamStore<float>& params, double beta_now, std::uint64_t seed,
                               std::uint64_t step, kernels::Execution exec,
                               std::span<const std::vector<float>* const> teacher_penults,
                               double lambda_tre) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  if (!teacher_penults.empty() && teacher_penults.size() != batch.size()) {
    throw DimensionError("teacher penultimates do not cover the batch");
  }
  constexpr std::size_t kDefaultSlots = 8;
  const std::size_t slots = std::min(batch.size(), kDefaultSlots);
  std::vector<ad::GradBuffer<float>> buffers;
  buffers.reserve(slots);
  for (std::size_t s = 0; s < slots; ++s) buffers.emplace_back(params);
  std::vector<double> slot_loss(slots, 0.0);
  const float scale = 1.0f / static_cast<float>(batch.size());

  kernels::ForEach(slots, exec, [&](std::size_t s) {
    ad::Graph<float> graph;
    for (std::size_t pos = s; pos < batch.size(); pos += slots) {
      std::mt19937_64 rng = ExampleRng(seed, step, pos);
      ForwardOptions options{.mode = ad::Mode::kTrain, .rng = &rng};
      std::span<const float> teacher;
      if (!teacher_penults.empty()) teacher = *teacher_penults[pos];
      const LossParts<float> parts = ExampleLoss(*batch[pos], config, params, beta_now, options, graph,
                                                 &buffers[s], scale, teacher, lambda_tre);
      slot_loss[s] += static_cast<double>(parts.total);
    }
  });

  double loss = 0.0;
  for (std::size_t s = 0; s < slots; ++s) {
    buffers[s].AccumulateInto(params);
    loss += slot_loss[s];
  }
  return loss / static_cast<double>(batch.size());
}

Predictions Predict(const ModelConfig& config, const ad::ParamStore<float>& params, const Dataset& data,
                    bool with_penult, kernels::Execution exec) {
  CheckLayout(config, params);
  Predictions out;
  out.values.assign(data.size(), 0.0);
  if (with_penult) {
    out.penult_dim = config.head_hidden;
    out.penult.assign(data.size() * static_cast<std::size_t>(config.head_hidden), 0.0f);
  }
  kernels::ForEach(data.size(), exec, [&](std::size_t i) {
    thread_local ad::Graph<float> graph;
    Inference inf = [&] {
      try {
        return Infer(config, params, data[i].tree, graph);
      } catch (const std::exception& e) {
        throw std::runtime_error(fmt::format("forward failed on example {}: {}", i, e.what()));
      }
    }();
    out.values[i] = inf.prediction;
    if (with_penult) {
      std::copy(inf.penult.begin(), inf.penult.end(),
                out.penult.begin() + static_cast<std::ptrdiff_t>(i * static_cast<std::size_t>(config.head_hidden)));
    }
  });
  return out;
}

CategoryMse MseByCategory(const Dataset& data, std::span<const double> predictions, TargetSet targets) {
  if (data.size() != predictions.size()) throw DimensionError("predictions do not cover the dataset");
  double sum[2] = {0.0, 0.0};
  long count[2] = {0, 0};
  for (std::size_t i = 0; i < data.size(); ++i) {
    const int target = targets == TargetSet::kAdapted ? data[i].adapted_value : data[i].standard_value;
    const double diff = predictions[i] - target;
    const int k = data[i].is_exception ? 1 : 0;
    sum[k] += diff * diff;
    ++count[k];
  }
  CategoryMse out;
  if (count[0] > 0) out.regular = sum[0] / static_cast<double>(count[0]);
  if (count[1] > 0) out.exception = sum[1] / static_cast<double>(count[1]);
  return out;
}

std::vector<double> PenultResiduals(const Predictions& student, const Predictions& teacher) {
  if (student.penult_dim != teacher.penult_dim || student.penult.size() != teacher.penult.size() ||
      student.penult_dim == 0) {
    throw DimensionError(fmt::format("penultimate matrices differ: {} x {} vs {} x {}",
                                     student.values.size(), student.penult_dim, teacher.values.size(),
                                     teacher.penult_dim));
  }
  const std::size_t dim = static_cast<std::size_t>(student.penult_dim);
  std::vector<double> out(student.values.size(), 0.0);
  for (std::size_t i = 0; i < out.size(); ++i) {
    double acc = 0.0;
    for (std::size_t k = 0; k < dim; ++k) {
      const double d = static_cast<double>(student.penult[i * dim + k]) - teacher.penult[i * dim + k];
      acc += d * d;
    }
    out[i] = acc / static_cast<double>(dim);
  }
  return out;
}

namespace {

void RecordValidation(const ModelConfig& config, const ad::ParamStore<float>& params, const Dataset& validation,
                      double epoch, kernels::Execution exec, DynamicsLog& log) {
  const Predictions preds = Predict(config, params, validation, false, exec);
  for (TargetSet targets : {TargetSet::kCompositional, TargetSet::kAdapted}) {
    const CategoryMse mse = MseByCategory(validation, preds.values, targets);
    if (mse.regular) log.push_back({epoch, targets, Category::kRegular, *mse.regular});
    if (mse.exception) log.push_back({epoch, targets, Category::kException, *mse.exception});
  }
}

// Shared loop for plain and TRE training. `teacher_penults` is empty or has one
// entry per training example.
void RunTraining(const ModelConfig& model, const TrainConfig& train, const TrainInputs& inputs,
                 const std::vector<std::vector<float>>& teacher_penults, TrainResult& result) {
  const Dataset& data = *inputs.train;
  const std::size_t n = data.size();
  if (inputs.validation != nullptr && !inputs.validation->empty()) {
    RecordValidation(model, result.params, *inputs.validation, 0.0, inputs.exec, result.log);
  }
  if (train.epochs == 0 || n == 0) return;

  std::mt19937_64 shuffle_rng(inputs.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t batch_size = static_cast<std::size_t>(train.batch_size);
  const std::size_t batches = (n + batch_size - 1) / batch_size;
  const ad::AdamWOptions adam{.lr = train.lr, .weight_decay = train.weight_decay};
  double next_eval = train.eval_every;
  std::uint64_t step = 0;
  std::vector<const LabeledExample*> batch;
  std::vector<const std::vector<float>*> teacher_batch;

  for (int epoch = 0; epoch < train.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_loss = 0.0;
    for (std::size_t b = 0; b < batches; ++b) {
      const std::size_t begin = b * batch_size;
      const std::size_t end = std::min(n, begin + batch_size);
      batch.clear();
      teacher_batch.clear();
      for (std::size_t k = begin; k < end; ++k) {
        batch.push_back(&data[order[k]]);
        if (!teacher_penults.empty()) teacher_batch.push_back(&teacher_penults[order[k]]);
      }
      const double progress = epoch + static_cast<double>(b) / static_cast<double>(batches);
      const double beta_now = BetaSchedule(progress, model.beta, train);
      const double loss = AccumulateBatchGradient(batch, model, result.params, beta_now, inputs.seed, step,
                                                  inputs.exec, teacher_batch, train.lambda_tre);
      if (!std::isfinite(loss)) {
        throw NumericError(fmt::format("training diverged: non-finite loss at epoch {} batch {}", epoch, b));
      }
      ad::AdamWStep(result.params, adam);
      ++step;
      epoch_loss += loss * static_cast<double>(end - begin);

      const double done = epoch + static_cast<double>(b + 1) / static_cast<double>(batches);
      if (inputs.validation != nullptr && !inputs.validation->empty() && done + 1e-9 >= next_eval) {
        RecordValidation(model, result.params, *inputs.validation, done, inputs.exec, result.log);
        while (next_eval <= done + 1e-9) next_eval += train.eval_every;
      }
    }
    result.epoch_loss.push_back(epoch_loss / static_cast<double>(n));
    if (inputs.progress) {
      inputs.progress(fmt::format("epoch {}/{} loss {:.4f}", epoch + 1, train.epochs, result.epoch_loss.back()));
    }
  }
}

}  // namespace

TrainResult Train(const ModelConfig& model, const TrainConfig& train, const TrainInputs& inputs) {
  model.Validate();
  train.Validate();
  if (inputs.train == nullptr) throw std::invalid_argument("train: no training data");
  TrainResult result{.params = InitParams(model, inputs.seed), .log = {}, .epoch_loss = {}};
  RunTraining(model, train, inputs, {}, result);
  return result;
}

TreResult TreTrain(const ModelConfig& teacher_config, const ad::ParamStore<float>& teacher,
                   const ModelConfig& student, const TrainConfig& train, const TrainInputs& inputs,
                   const Dataset& score_set) {
  student.Validate();
  train.Validate();
  if (inputs.train == nullptr) throw std::invalid_argument("tre_train: no training data");
  CheckLayout(teacher_config, teacher);
  if (teacher_config.head_hidden != student.head_hidden) {
    throw DimensionError(fmt::format("teacher penultimate size {} differs from student {}",
                                     teacher_config.head_hidden, student.head_hidden));
  }
  const Predictions teacher_train = Predict(teacher_config, teacher, *inputs.train, true, inputs.exec);
  std::vector<std::vector<float>> teacher_penults(inputs.train->size());
  const std::size_t dim = static_cast<std::size_t>(teacher_train.penult_dim);
  for (std::size_t i = 0; i < teacher_penults.size(); ++i) {
    const auto first = teacher_train.penult.begin() + static_cast<std::ptrdiff_t>(i * dim);
    teacher_penults[i].assign(first, first + static_cast<std::ptrdiff_t>(dim));
  }

  TreResult out;
  out.run.params = InitParams(student, inputs.seed);
  for (const char* name : {"head.2.W", "head.2.b"}) {
    ad::Tensor<float>& shared = out.run.params.at(name);
    shared.value = teacher.at(name).value;
    shared.requires_grad = false;
  }
  RunTraining(student, train, inputs, teacher_penults, out.run);

  const Predictions student_scores = Predict(student, out.run.params, score_set, true, inputs.exec);
  const Predictions teacher_scores = Predict(teacher_config, teacher, score_set, true, inputs.exec);
  out.residuals = PenultResiduals(student_scores, teacher_scores);
  return out;
}

}  // namespace bcm
