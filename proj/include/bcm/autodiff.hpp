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

// Minimal reverse-mode differentiation over dense vectors and matrices.
//
// A Graph is a tape: every op appends a node whose value lives in an arena
// owned by the graph. Parameters are bound by reference, so their values are
// read in place and their gradients land in caller-provided buffers. The tape
// is cleared and reused per tree; arenas keep their capacity.

#ifndef BCM_AUTODIFF_HPP_
#define BCM_AUTODIFF_HPP_

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <fmt/format.h>

#include "bcm/errors.hpp"
#include "bcm/kernels.hpp"

namespace bcm::ad {

struct Shape {
  int rows = 0;
  int cols = 1;

  int size() const { return rows * cols; }
  bool operator==(const Shape&) const = default;
};

inline std::string ToString(Shape s) { return fmt::format("[{}x{}]", s.rows, s.cols); }

template <typename T>
struct Tensor {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;
  bool requires_grad = true;
  // Set when a backward pass has deposited into `grad` since the last step.
  bool has_grad = false;
};

struct AdamWOptions {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

// Ordered, named collection of tensors plus AdamW moments.
template <typename T>
class ParamStore {
 public:
  Tensor<T>& Add(const std::string& name, Shape shape);

  bool contains(std::string_view name) const { return index_.contains(std::string(name)); }
  Tensor<T>& at(std::string_view name);
  const Tensor<T>& at(std::string_view name) const;
  std::size_t index_of(std::string_view name) const;

  std::size_t size() const { return tensors_.size(); }
  Tensor<T>& operator[](std::size_t i) { return tensors_[i]; }
  const Tensor<T>& operator[](std::size_t i) const { return tensors_[i]; }
  const std::string& name(std::size_t i) const { return names_[i]; }

  std::size_t parameter_count() const;
  long step_count() const { return step_count_; }

  void ZeroGrad();

  // Value-converting copy (e.g. float checkpoint to double for grad checks).
  template <typename U>
  ParamStore<U> Cast() const {
    ParamStore<U> out;
    for (std::size_t i = 0; i < tensors_.size(); ++i) {
      Tensor<U>& t = out.Add(names_[i], tensors_[i].shape);
      for (std::size_t k = 0; k < t.value.size(); ++k) t.value[k] = static_cast<U>(tensors_[i].value[k]);
      t.requires_grad = tensors_[i].requires_grad;
    }
    return out;
  }

  bool SameValues(const ParamStore& other) const;

 private:
  template <typename U>
  friend void AdamWStep(ParamStore<U>&, const AdamWOptions&);

  std::vector<std::string> names_;
  std::vector<Tensor<T>> tensors_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<std::vector<T>> first_moment_;
  std::vector<std::vector<T>> second_moment_;
  long step_count_ = 0;
};

// Decoupled weight decay: p <- p - lr * (m_hat / (sqrt(v_hat) + eps) + wd * p).
// Frozen tensors (requires_grad == false) are skipped. Clears gradients.
template <typename T>
void AdamWStep(ParamStore<T>& store, const AdamWOptions& options);

// Checkpoint layout: an ASCII manifest followed by raw little-endian float32.
//   BCMCKPT 1
//   tensors <n>
//   <name> <rows> <cols> <offset> <frozen 0|1>     (n lines, offset in floats)
//   data <total floats>
//   <4 * total bytes of payload>
void SaveCheckpoint(const std::filesystem::path& path, const ParamStore<float>& store);
ParamStore<float> LoadCheckpoint(const std::filesystem::path& path);

// Gradient destination for every tensor of a store, laid out in store order.
template <typename T>
class GradBuffer {
 public:
  GradBuffer() = default;
  explicit GradBuffer(const ParamStore<T>& store);

  std::span<T> operator[](std::size_t i) { return grads_[i]; }
  void Zero();
  // store.grad += this, in store order; marks trainable tensors populated.
  void AccumulateInto(ParamStore<T>& store) const;
  void Add(const GradBuffer& other);

 private:
  std::vector<std::vector<T>> grads_;
};

enum class Mode { kTrain, kEval };

template <typename T>
class Graph {
 public:
  struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
  };

  Graph() = default;

  void Clear();
  std::size_t node_count() const { return nodes_.size(); }

  Var Constant(std::span<const T> values, Shape shape);
  Var Constant(std::span<const T> values) {
    return Constant(values, Shape{static_cast<int>(values.size()), 1});
  }
  Var Zeros(int size);
  // Binds a parameter tensor; gradients accumulate into `grad` (same size).
  // Pass an empty span to treat the tensor as frozen.
  Var Param(const Tensor<T>& tensor, std::span<T> grad);

  Var Row(Var table, int row);
  Var MatVec(Var w, Var x);
  Var Affine(Var w, Var x, Var b);
  Var Add(Var a, Var b);
  Var AddScalar(Var a, T s);
  Var Scale(Var a, T s);
  Var Hadamard(Var a, Var b);
  Var Sigmoid(Var a);
  Var Tanh(Var a);
  Var Softplus(Var a);
  Var Slice(Var a, int offset, int length);
  // mu + sigma * eps with eps held constant.
  Var GaussSample(Var mu, Var sigma, std::span<const T> eps);
  // Elementwise product with a constant mask.
  Var Mask(Var a, std::span<const T> mask);
  // Classical dropout: train multiplies by the given 0/1 mask, eval scales by (1 - p).
  Var Dropout(Var a, T p, Mode mode, std::span<const T> keep_mask);
  // KL[N(mu, diag(sigma^2)) || N(0, I)] = 1/2 sum(sigma^2 + mu^2 - 1 - ln sigma^2).
  Var KlStdNormal(Var mu, Var sigma);
  Var Sum(Var a);
  Var Mean(Var a);
  // mean((a - b)^2)
  Var Mse(Var a, Var b);

  std::span<const T> value(Var v) const;
  T scalar(Var v) const { return value(v)[0]; }
  Shape shape(Var v) const { return nodes_[v.id].shape; }
  // Gradient of the last backward pass w.r.t. a non-parameter node.
  std::span<const T> grad(Var v) const;

  // Seeds d(loss)/d(loss) = seed and propagates. Parameter gradients
  // accumulate across calls; intermediate gradients are reset.
  void Backward(Var loss, T seed = T(1));

 private:
  enum class OpKind : std::uint8_t {
    kInput,
    kParam,
    kRow,
    kMatVec,
    kAffine,
    kAdd,
    kAddScalar,
    kScale,
    kHadamard,
    kSigmoid,
    kTanh,
    kSoftplus,
    kSlice,
    kGaussSample,
    kMask,
    kKl,
    kSum,
    kMean,
    kMse,
  };

  struct Node {
    OpKind op = OpKind::kInput;
    Shape shape;
    int a = -1;
    int b = -1;
    int c = -1;
    int ext = -1;      // index into externals_ for parameters
    std::size_t offset = 0;  // into values_/grads_
    std::size_t aux = 0;     // into aux_ (eps, masks)
    int iarg = 0;
    T sarg = T(0);
    bool needs_grad = false;
  };

  struct External {
    const T* value = nullptr;
    T* grad = nullptr;
  };

  Var Push(Node node);
  T* mutable_value(int id);
  T* grad_ptr(int id);
  const T* value_ptr(int id) const;
  void RequireSameShape(Var a, Var b, std::string_view op) const;
  std::size_t PushAux(std::span<const T> values);

  std::vector<Node> nodes_;
  std::vector<External> externals_;
  std::vector<T> values_;
  std::vector<T> grads_;
  std::vector<T> aux_;
};

extern template class ParamStore<float>;
extern template class ParamStore<double>;
extern template class GradBuffer<float>;
extern template class GradBuffer<double>;
extern template class Graph<float>;
extern template class Graph<double>;

}  // namespace bcm::ad

#endif  // BCM_AUTODIFF_HPP_
