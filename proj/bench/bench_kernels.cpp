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

// Serial reference vs OpenMP execution of the per-example loops. Both paths
// produce bitwise identical results; this only measures speed.

#include <vector>

#include <benchmark/benchmark.h>

#include "bcm/datagen.hpp"
#include "bcm/kernels.hpp"
#include "bcm/training.hpp"
#include "bcm/treelstm.hpp"

namespace {

using bcm::kernels::Execution;

bcm::ModelConfig Desk() {
  bcm::ModelConfig c;
  c.kind = bcm::BottleneckKind::kDvib;
  c.beta = 0.25;
  c.embedding_dim = 50;
  c.hidden_dim = 50;
  return c;
}

const bcm::Dataset& Data() {
  static const bcm::Dataset data = bcm::GenerateSplit({.name = "bench", .lengths = {5, 6, 7},
                                                       .examples_per_length = 0, .total_count = 256,
                                                       .exception_fraction = 0.12, .seed = 1});
  return data;
}

void BatchGradient(benchmark::State& state, Execution exec) {
  const bcm::ModelConfig c = Desk();
  auto params = bcm::InitParams(c, 1);
  std::vector<const bcm::LabeledExample*> batch;
  for (int i = 0; i < state.range(0); ++i) batch.push_back(&Data()[static_cast<std::size_t>(i)]);
  std::uint64_t step = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(bcm::AccumulateBatchGradient(batch, c, params, 0.25, 1, step++, exec));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void Inference(benchmark::State& state, Execution exec) {
  const bcm::ModelConfig c = Desk();
  const auto params = bcm::InitParams(c, 1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(bcm::Predict(c, params, Data(), true, exec));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(Data().size()));
}

BENCHMARK_CAPTURE(BatchGradient, serial, Execution::kSerial)->Arg(8)->Arg(32)->Arg(128)->UseRealTime();
BENCHMARK_CAPTURE(BatchGradient, parallel, Execution::kParallel)->Arg(8)->Arg(32)->Arg(128)->UseRealTime();
BENCHMARK_CAPTURE(Inference, serial, Execution::kSerial)->UseRealTime();
BENCHMARK_CAPTURE(Inference, parallel, Execution::kParallel)->UseRealTime();

}  // namespace

BENCHMARK_MAIN();
