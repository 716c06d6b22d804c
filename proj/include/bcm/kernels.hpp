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

// Dense inner kernels used by the graph, plus the deterministic parallel loop
// used for per-example work. Every parallel entry point has a serial twin so
// tests can compare the two bit for bit.

#ifndef BCM_KERNELS_HPP_
#define BCM_KERNELS_HPP_

#include <cstddef>
#include <functional>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace bcm::kernels {

enum class Execution { kSerial, kParallel };

// y = W x (+ b), W row-major rows x cols.
template <typename T>
inline void Gemv(int rows, int cols, const T* w, const T* x, const T* b, T* y) {
  for (int r = 0; r < rows; ++r) {
    const T* row = w + static_cast<std::ptrdiff_t>(r) * cols;
    T acc = b ? b[r] : T(0);
    for (int c = 0; c < cols; ++c) acc += row[c] * x[c];
    y[r] = acc;
  }
}

// gx += W^T g
template <typename T>
inline void GemvTransposeAccumulate(int rows, int cols, const T* w, const T* g, T* gx) {
  for (int r = 0; r < rows; ++r) {
    const T* row = w + static_cast<std::ptrdiff_t>(r) * cols;
    const T gr = g[r];
    if (gr == T(0)) continue;
    for (int c = 0; c < cols; ++c) gx[c] += gr * row[c];
  }
}

// gW += g x^T
template <typename T>
inline void OuterAccumulate(int rows, int cols, const T* g, const T* x, T* gw) {
  for (int r = 0; r < rows; ++r) {
    const T gr = g[r];
    if (gr == T(0)) continue;
    T* row = gw + static_cast<std::ptrdiff_t>(r) * cols;
    for (int c = 0; c < cols; ++c) row[c] += gr * x[c];
  }
}

int MaxThreads();
void SetThreads(int threads);

// Runs body(i) for i in [0, n). Iterations must write disjoint outputs; the
// result is then independent of thread count and schedule.
void ForEach(std::size_t n, Execution exec, const std::function<void(std::size_t)>& body);

}  // namespace bcm::kernels

#endif  // BCM_KERNELS_HPP_
