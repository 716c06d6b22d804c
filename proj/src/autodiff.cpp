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

#include "bcm/autodiff.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace bcm::ad {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

// ---------------------------------------------------------------------------
// ParamStore

template <typename T>
Tensor<T>& ParamStore<T>::Add(const std::string& name, Shape shape) {
  if (index_.contains(name)) throw std::invalid_argument("duplicate parameter name " + name);
  if (shape.rows <= 0 || shape.cols <= 0) {
    throw DimensionError("parameter " + name + " has empty shape " + ToString(shape));
  }
  index_.emplace(name, tensors_.size());
  names_.push_back(name);
  Tensor<T> t;
  t.shape = shape;
  t.value.assign(static_cast<std::size_t>(shape.size()), T(0));
  t.grad.assign(static_cast<std::size_t>(shape.size()), T(0));
  tensors_.push_back(std::move(t));
  first_moment_.emplace_back(static_cast<std::size_t>(shape.size()), T(0));
  second_moment_.emplace_back(static_cast<std::size_t>(shape.size()), T(0));
  return tensors_.back();
}

template <typename T>
std::size_t ParamStore<T>::index_of(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw std::out_of_range("unknown parameter " + std::string(name));
  return it->second;
}

template <typename T>
Tensor<T>& ParamStore<T>::at(std::string_view name) {
  return tensors_[index_of(name)];
}

template <typename T>
const Tensor<T>& ParamStore<T>::at(std::string_view name) const {
  return tensors_[index_of(name)];
}

template <typename T>
std::size_t ParamStore<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += t.value.size();
  return n;
}

template <typename T>
void ParamStore<T>::ZeroGrad() {
  for (auto& t : tensors_) {
    std::fill(t.grad.begin(), t.grad.end(), T(0));
    t.has_grad = false;
  }
}

template <typename T>
bool ParamStore<T>::SameValues(const ParamStore& other) const {
  if (names_ != other.names_) return false;
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    if (tensors_[i].shape != other.tensors_[i].shape) return false;
    if (std::memcmp(tensors_[i].value.data(), other.tensors_[i].value.data(),
                    tensors_[i].value.size() * sizeof(T)) != 0) {
      return false;
    }
  }
  return true;
}

template <typename T>
void AdamWStep(ParamStore<T>& store, const AdamWOptions& options) {
  std::vector<std::string> missing;
  for (std::size_t i = 0; i < store.size(); ++i) {
    if (store[i].requires_grad && !store[i].has_grad) missing.push_back(store.name(i));
  }
  if (!missing.empty()) {
    throw std::logic_error(fmt::format("AdamW step without gradients for: {}",
                                       fmt::join(missing, ", ")));
  }
  ++store.step_count_;
  const double step = static_cast<double>(store.step_count_);
  const double correction1 = 1.0 - std::pow(options.beta1, step);
  const double correction2 = 1.0 - std::pow(options.beta2, step);
  const T beta1 = static_cast<T>(options.beta1);
  const T beta2 = static_cast<T>(options.beta2);
  const T lr = static_cast<T>(options.lr);
  const T decay = static_cast<T>(options.weight_decay);
  const T eps = static_cast<T>(options.eps);
  const T inv_c1 = static_cast<T>(1.0 / correction1);
  const T inv_c2 = static_cast<T>(1.0 / correction2);
  for (std::size_t i = 0; i < store.size(); ++i) {
    Tensor<T>& t = store[i];
    if (!t.requires_grad) continue;
    std::vector<T>& m = store.first_moment_[i];
    std::vector<T>& v = store.second_moment_[i];
    for (std::size_t k = 0; k < t.value.size(); ++k) {
      const T g = t.grad[k];
      m[k] = beta1 * m[k] + (T(1) - beta1) * g;
      v[k] = beta2 * v[k] + (T(1) - beta2) * g * g;
      const T m_hat = m[k] * inv_c1;
      const T v_hat = v[k] * inv_c2;
      t.value[k] -= lr * (m_hat / (std::sqrt(v_hat) + eps) + decay * t.value[k]);
    }
    std::fill(t.grad.begin(), t.grad.end(), T(0));
    t.has_grad = false;
  }
}

template void AdamWStep(ParamStore<float>&, const AdamWOptions&);
template void AdamWStep(ParamStore<double>&, const AdamWOptions&);

// ---------------------------------------------------------------------------
// Checkpoints

void SaveCheckpoint(const std::filesystem::path& path, const ParamStore<float>& store) {
  std::ostringstream header;
  header << "BCMCKPT 1\n" << "tensors " << store.size() << '\n';
  std::size_t offset = 0;
  for (std::size_t i = 0; i < store.size(); ++i) {
    const auto& t = store[i];
    header << store.name(i) << ' ' << t.shape.rows << ' ' << t.shape.cols << ' ' << offset << ' '
           << (t.requires_grad ? 0 : 1) << '\n';
    offset += t.value.size();
  }
  header << "data " << offset << '\n';
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  const std::string text = header.str();
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (std::size_t i = 0; i < store.size(); ++i) {
    const auto& v = store[i].value;
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(float)));
  }
  if (!out) throw IoError("write failed for " + path.string());
}

ParamStore<float> LoadCheckpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  auto fail = [&](const std::string& what) -> IoError {
    return IoError("malformed checkpoint " + path.string() + ": " + what);
  };
  std::string line;
  if (!std::getline(in, line) || line != "BCMCKPT 1") throw fail("bad magic");
  std::size_t count = 0;
  {
    if (!std::getline(in, line)) throw fail("missing tensor count");
    std::istringstream ls(line);
    std::string key;
    if (!(ls >> key >> count) || key != "tensors") throw fail("bad tensor count line");
  }
  struct Entry {
    std::string name;
    Shape shape;
    std::size_t offset;
    bool frozen;
  };
  std::vector<Entry> entries;
  for (std::size_t i = 0; i < count; ++i) {
    if (!std::getline(in, line)) throw fail("truncated manifest");
    std::istringstream ls(line);
    Entry e;
    int frozen = 0;
    if (!(ls >> e.name >> e.shape.rows >> e.shape.cols >> e.offset >> frozen)) {
      throw fail("bad manifest line '" + line + "'");
    }
    e.frozen = frozen != 0;
    entries.push_back(std::move(e));
  }
  std::size_t total = 0;
  {
    if (!std::getline(in, line)) throw fail("missing data line");
    std::istringstream ls(line);
    std::string key;
    if (!(ls >> key >> total) || key != "data") throw fail("bad data line");
  }
  std::vector<float> payload(total);
  in.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(total * sizeof(float)));
  if (static_cast<std::size_t>(in.gcount()) != total * sizeof(float)) throw fail("truncated payload");
  ParamStore<float> store;
  for (const Entry& e : entries) {
    Tensor<float>& t = store.Add(e.name, e.shape);
    if (e.offset + t.value.size() > total) throw fail("tensor " + e.name + " exceeds payload");
    std::copy_n(payload.begin() + static_cast<std::ptrdiff_t>(e.offset), t.value.size(), t.value.begin());
    t.requires_grad = !e.frozen;
  }
  return store;
}

// ---------------------------------------------------------------------------
// GradBuffer

template <typename T>
GradBuffer<T>::GradBuffer(const ParamStore<T>& store) {
  grads_.reserve(store.size());
  for (std::size_t i = 0; i < store.size(); ++i) grads_.emplace_back(store[i].value.size(), T(0));
}

template <typename T>
void GradBuffer<T>::Zero() {
  for (auto& g : grads_) std::fill(g.begin(), g.end(), T(0));
}

template <typename T>
void GradBuffer<T>::AccumulateInto(ParamStore<T>& store) const {
  for (std::size_t i = 0; i < store.size(); ++i) {
    Tensor<T>& t = store[i];
    if (!t.requires_grad) continue;
    const auto& g = grads_[i];
    for (std::size_t k = 0; k < g.size(); ++k) t.grad[k] += g[k];
    t.has_grad = true;
  }
}

template <typename T>
void GradBuffer<T>::Add(const GradBuffer& other) {
  for (std::size_t i = 0; i < grads_.size(); ++i) {
    for (std::size_t k = 0; k < grads_[i].size(); ++k) grads_[i][k] += other.grads_[i][k];
  }
}

// ---------------------------------------------------------------------------
// Graph

template <typename T>
void Graph<T>::Clear() {
  nodes_.clear();
  externals_.clear();
  values_.clear();
  grads_.clear();
  aux_.clear();
}

template <typename T>
typename Graph<T>::Var Graph<T>::Push(Node node) {
  if (node.op != OpKind::kParam) {
    node.offset = values_.size();
    values_.resize(values_.size() + static_cast<std::size_t>(node.shape.size()));
  }
  nodes_.push_back(node);
  return Var{static_cast<int>(nodes_.size()) - 1};
}

template <typename T>
std::size_t Graph<T>::PushAux(std::span<const T> values) {
  const std::size_t at = aux_.size();
  aux_.insert(aux_.end(), values.begin(), values.end());
  return at;
}

template <typename T>
const T* Graph<T>::value_ptr(int id) const {
  const Node& n = nodes_[id];
  return n.ext >= 0 ? externals_[n.ext].value : values_.data() + n.offset;
}

template <typename T>
T* Graph<T>::mutable_value(int id) {
  return values_.data() + nodes_[id].offset;
}

template <typename T>
T* Graph<T>::grad_ptr(int id) {
  const Node& n = nodes_[id];
  return n.ext >= 0 ? externals_[n.ext].grad : grads_.data() + n.offset;
}

template <typename T>
std::span<const T> Graph<T>::value(Var v) const {
  return {value_ptr(v.id), static_cast<std::size_t>(nodes_[v.id].shape.size())};
}

template <typename T>
std::span<const T> Graph<T>::grad(Var v) const {
  const Node& n = nodes_[v.id];
  if (n.ext >= 0 || grads_.size() < values_.size()) return {};
  return {grads_.data() + n.offset, static_cast<std::size_t>(n.shape.size())};
}

template <typename T>
void Graph<T>::RequireSameShape(Var a, Var b, std::string_view op) const {
  const Shape sa = nodes_[a.id].shape;
  const Shape sb = nodes_[b.id].shape;
  if (sa != sb) {
    throw DimensionError(fmt::format("{}: shape mismatch {} vs {}", op, ToString(sa), ToString(sb)));
  }
}

template <typename T>
typename Graph<T>::Var Graph<T>::Constant(std::span<const T> values, Shape shape) {
  if (static_cast<std::size_t>(shape.size()) != values.size()) {
    throw DimensionError(fmt::format("constant: {} values for shape {}", values.size(), ToString(shape)));
  }
  Var v = Push(Node{.op = OpKind::kInput, .shape = shape});
  std::copy(values.begin(), values.end(), mutable_value(v.id));
  return v;
}

template <typename T>
typename Graph<T>::Var Graph<T>::Zeros(int size) {
  Var v = Push(Node{.op = OpKind::kInput, .shape = {size, 1}});
  std::fill_n(mutable_value(v.id), size, T(0));
  return v;
}

template <typename T>
typename Graph<T>::Var Graph<T>::Param(const Tensor<T>& tensor, std::span<T> grad) {
  const bool trainable = !grad.empty();
  if (trainable && grad.size() != tensor.value.size()) {
    throw DimensionError(fmt::format("param: gradient buffer of {} for tensor {}", grad.size(),
                                     ToString(tensor.shape)));
  }
  externals_.push_back({tensor.value.data(), trainable ? grad.data() : nullptr});
  return Push(Node{.op = OpKind::kParam,
                   .shape = tensor.shape,
                   .ext = static_cast<int>(externals_.size()) - 1,
                   .needs_grad = trainable});
}

template <typename T>
typename Graph<T>::Var Graph<T>::Row(Var table, int row) {
  const Shape ts = nodes_[table.id].shape;
  if (row < 0 || row >= ts.rows) {
    throw DimensionError(fmt::format("row: index {} outside table {}", row, ToString(ts)));
  }
  Var v = Push(Node{.op = OpKind::kRow,
                    .shape = {ts.cols, 1},
                    .a = table.id,
                    .iarg = row,
                    .needs_grad = nodes_[table.id].needs_grad});
  const T* src = value_ptr(table.id) + static_cast<std::ptrdiff_t>(row) * ts.cols;
  std::copy_n(src, ts.cols, mutable_value(v.id));
  return v;
}

template <typename T>
typename Graph<T>::Var Graph<T>::MatVec(Var w, Var x) {
  const Shape ws = nodes_[w.id].shape;
  const Shape xs = nodes_[x.id].shape;
  if (xs.cols != 1 || ws.cols != xs.rows) {
    throw DimensionError(fmt::format("matvec: shape mismatch {} vs {}", ToString(ws), ToString(xs)));
  }
  Var v = Push(Node{.op = OpKind::kMatVec,
                    .shape = {ws.rows, 1},
                    .a = w.id,
                    .b = x.id,
                    .needs_grad = nodes_[w.id].needs_grad || nodes_[x.id].needs_grad});
  kernels::Gemv<T>(ws.rows, ws.cols, value_ptr(w.id), value_ptr(x.id), nullptr, mutable_value(v.id));
  return v;
}

template <typename T>
typename Graph<T>::Var Graph<T>::Affine(Var w, Var x, Var b) {
  const Shape ws = nodes_[w.id].shape;
  const Shape xs = nodes_[x.id].shape;
  const Shape bs = nodes_[b.id].shape;
  if (xs.cols != 1 || ws.cols != xs.rows) {
    throw DimensionError(fmt::format("affine: shape mismatch {} vs {}", ToString(ws), ToString(xs)));
  }
  if (bs != Shape{ws.rows, 1}) {
    throw DimensionError(fmt::format("affine: bias {} for weight {}", ToString(bs), ToString(ws)));
  }
  Var v = Push(Node{.op = OpKind::kAffine,
                    .shape = {ws.rows, 1},
                    .a = w.id,
                    .b = x.id,
                    .c = b.id,
                    .needs_grad = nodes_[w.id].needs_grad || nodes_[x.id].needs_grad ||
                                  nodes_[b.id].needs_grad});
  kernels::Gemv<T>(ws.rows, ws.cols, value_ptr(w.id), value_ptr(x.id), value_ptr(b.id),
                   mutable_value(v.id));
  return v;
}

template <typename T>
typename Graph<T>::Var Graph<T>::Add(Var a, Var b) {
  RequireSameShape(a, b, "add");
  Var v = Push(Node{.op = OpKind::kAdd,
                    .shape = nodes_[a.id].shape,
                    .a = a.id,
                    .b = b.id,
                    .needs_grad = nodes_[a.id].needs_grad || nodes_[b.id].needs_grad});
  const T* pa = value_ptr(a.id);
  const T* pb = value_ptr(b.id);
  T* out = mutable_value(v.id);
  for (int i = 0; i < nodes_[v.id].shape.size(); ++i) out[i] = pa[i] + pb[i];
  return v;
}

template <typename T>
typename Graph<T>::Var Graph<T>::AddScalar(Var a, T s) {
  Var v = Push(Node{.op = OpKind::kAddScalar,
                    .shape = nodes_[a.id].shape,
                    .a = a.id,
                    .sarg = s,
                    .needs_grad = nodes_[a.id].needs_grad});
  const T* pa = value_ptr(a.id);
  T* out = mutable_value(v.id);
  for (int i = 0; i < nodes_[v.id].shape.size(); ++i) out[i] = pa[i] + s;
  return v;
}

template <typename T>
typename Graph<T>::Var Graph<T>::Scale(Var a, T s) {
  Var v = Push(Node{.op = OpKind::kScale,
                    .shape = nodes_[a.id].shape,
                    .a = a.id,
                    .sarg = s,
                    .needs_grad = nodes_[a.id].needs_grad});
  const T* pa = value_ptr(a.id);
  T* out = mutable_value(v.id);
  for (int i = 0; i < nodes_[v.id].shape.size(); ++i) out[i] = pa[i] * s;
  return v;
}

template <typename T>
typename Graph<T>::Var Graph<T>::Hadamard(Var a, Var b) {
  RequireSameShape(a, b, "hadamard");
  Var v = Push(Node{.op = OpKind::kHadamard,
                    .shape = nodes_[a.id].shape,
                    .a = a.id,
                    .b = b.id,
                    .needs_grad = nodes_[a.id].needs_grad || nodes_[b.id].needs_grad});
  const T* pa = value_ptr(a.id);
  const T* pb = value_ptr(b.id);
  T* out = mutable_value(v.id);
  for (int i = 0; i < nodes_[v.id].shape.size(); ++i) out[i] = pa[i] * pb[i];
  return v;
}

namespace {

template <typename T>
T StableSigmoid(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

template <typename T>
T StableSoftplus(T x) {
  return std::max(x, T(0)) + std::log1p(std::exp(-std::abs(x)));
}

}  // namespace

template <typename T>
typename Graph<T>::Var Graph<T>::Sigmoid(Var a) {
  Var v = Push(Node{.op = OpKind::kSigmoid,
                    .shape = nodes_[a.id].shape,
                    .a = a.id,
                    .needs_grad = nodes_[a.id].needs_grad});
  const T* pa = value_ptr(a.id);
  T* out = mutable_value(v.id);
  for (int i = 0; i < nodes_[v.id].shape.size(); ++i) out[i] = StableSigmoid(pa[i]);
  return v;
}

template <typename T>
typename Graph<T>::Var Graph<T>::Tanh(Var a) {
  Var v = Push(Node{.op = OpKind::kTanh,
                    .shape = nodes_[a.id].shape,
                    .a = a.id,
                    .needs_grad = nodes_[a.id].needs_grad});
  const T* pa = value_ptr(a.id);
  T* out = mutable_value(v.id);
  for (int i = 0; i < nodes_[v.id].shape.size(); ++i) out[i] = std::tanh(pa[i]);
  return v;
}

template <typename T>
typename Graph<T>::Var Graph<T>::Softplus(Var a) {
  Var v = Push(Node{.op = OpKind::kSoftplus,
                    .shape = nodes_[a.id].shape,
                    .a = a.id,
                    .needs_grad = nodes_[a.id].needs_grad});
  const T* pa = value_ptr(a.id);
  T* out = mutable_value(v.id);
  for (int i = 0; i < nodes_[v.id].shape.size(); ++i) out[i] = StableSoftplus(pa[i]);
  return v;
}

template <typename T>
typename Graph<T>::Var Graph<T>::Slice(Var a, int offset, int length) {
  const Shape as = nodes_[a.id].shape;
  if (as.cols != 1 || offset < 0 || length <= 0 || offset + length > as.rows) {
    throw DimensionError(fmt::format("slice: [{}, {}) outside {}", offset, offset + length, ToString(as)));
  }
  Var v = Push(Node{.op = OpKind::kSlice,
                    .shape = {length, 1},
                    .a = a.id,
                    .iarg = offset,
                    .needs_grad = nodes_[a.id].needs_grad});
  std::copy_n(value_ptr(a.id) + offset, length, mutable_value(v.id));
  return v;
}

template <typename T>
typename Graph<T>::Var Graph<T>::GaussSample(Var mu, Var sigma, std::span<const T> eps) {
  RequireSameShape(mu, sigma, "gauss_sample");
  const int n = nodes_[mu.id].shape.size();
  if (eps.size() != static_cast<std::size_t>(n)) {
    throw DimensionError(fmt::format("gauss_sample: {} noise values for {}", eps.size(),
                                     ToString(nodes_[mu.id].shape)));
  }
  const std::size_t aux = PushAux(eps);
  Var v = Push(Node{.op = OpKind::kGaussSample,
                    .shape = nodes_[mu.id].shape,
                    .a = mu.id,
                    .b = sigma.id,
                    .aux = aux,
                    .needs_grad = nodes_[mu.id].needs_grad || nodes_[sigma.id].needs_grad});
  const T* pm = value_ptr(mu.id);
  const T* ps = value_ptr(sigma.id);
  T* out = mutable_value(v.id);
  for (int i = 0; i < n; ++i) out[i] = pm[i] + ps[i] * aux_[aux + i];
  return v;
}

template <typename T>
typename Graph<T>::Var Graph<T>::Mask(Var a, std::span<const T> mask) {
  const int n = nodes_[a.id].shape.size();
  if (mask.size() != static_cast<std::size_t>(n)) {
    throw DimensionError(fmt::format("mask: {} values for {}", mask.size(), ToString(nodes_[a.id].shape)));
  }
  const std::size_t aux = PushAux(mask);
  Var v = Push(Node{.op = OpKind::kMask,
                    .shape = nodes_[a.id].shape,
                    .a = a.id,
                    .aux = aux,
                    .needs_grad = nodes_[a.id].needs_grad});
  const T* pa = value_ptr(a.id);
  T* out = mutable_value(v.id);
  for (int i = 0; i < n; ++i) out[i] = pa[i] * aux_[aux + i];
  return v;
}

template <typename T>
typename Graph<T>::Var Graph<T>::Dropout(Var a, T p, Mode mode, std::span<const T> keep_mask) {
  if (!(p >= T(0) && p < T(1))) throw std::invalid_argument(fmt::format("dropout: p = {} outside [0, 1)", p));
  if (p == T(0)) return a;
  if (mode == Mode::kEval) return Scale(a, T(1) - p);
  return Mask(a, keep_mask);
}

template <typename T>
typename Graph<T>::Var Graph<T>::KlStdNormal(Var mu, Var sigma) {
  RequireSameShape(mu, sigma, "kl");
  Var v = Push(Node{.op = OpKind::kKl,
                    .shape = {1, 1},
                    .a = mu.id,
                    .b = sigma.id,
                    .needs_grad = nodes_[mu.id].needs_grad || nodes_[sigma.id].needs_grad});
  const T* pm = value_ptr(mu.id);
  const T* ps = value_ptr(sigma.id);
  T acc = 0;
  for (int i = 0; i < nodes_[mu.id].shape.size(); ++i) {
    const T s2 = ps[i] * ps[i];
    acc += s2 + pm[i] * pm[i] - T(1) - std::log(s2);
  }
  mutable_value(v.id)[0] = T(0.5) * acc;
  return v;
}

template <typename T>
typename Graph<T>::Var Graph<T>::Sum(Var a) {
  Var v = Push(Node{.op = OpKind::kSum, .shape = {1, 1}, .a = a.id, .needs_grad = nodes_[a.id].needs_grad});
  const T* pa = value_ptr(a.id);
  T acc = 0;
  for (int i = 0; i < nodes_[a.id].shape.size(); ++i) acc += pa[i];
  mutable_value(v.id)[0] = acc;
  return v;
}

template <typename T>
typename Graph<T>::Var Graph<T>::Mean(Var a) {
  Var v = Push(Node{.op = OpKind::kMean, .shape = {1, 1}, .a = a.id, .needs_grad = nodes_[a.id].needs_grad});
  const T* pa = value_ptr(a.id);
  const int n = nodes_[a.id].shape.size();
  T acc = 0;
  for (int i = 0; i < n; ++i) acc += pa[i];
  mutable_value(v.id)[0] = acc / static_cast<T>(n);
  return v;
}

template <typename T>
typename Graph<T>::Var Graph<T>::Mse(Var a, Var b) {
  RequireSameShape(a, b, "mse");
  Var v = Push(Node{.op = OpKind::kMse,
                    .shape = {1, 1},
                    .a = a.id,
                    .b = b.id,
                    .needs_grad = nodes_[a.id].needs_grad || nodes_[b.id].needs_grad});
  const T* pa = value_ptr(a.id);
  const T* pb = value_ptr(b.id);
  const int n = nodes_[a.id].shape.size();
  T acc = 0;
  for (int i = 0; i < n; ++i) {
    const T d = pa[i] - pb[i];
    acc += d * d;
  }
  mutable_value(v.id)[0] = acc / static_cast<T>(n);
  return v;
}

template <typename T>
void Graph<T>::Backward(Var loss, T seed) {
  if (nodes_[loss.id].shape.size() != 1) {
    throw DimensionError("backward: loss must be scalar, got " + ToString(nodes_[loss.id].shape));
  }
  const T loss_value = value(loss)[0];
  if (!std::isfinite(static_cast<double>(loss_value))) {
    throw NumericError(fmt::format("backward: non-finite loss {}", loss_value));
  }
  grads_.assign(values_.size(), T(0));
  if (!nodes_[loss.id].needs_grad) return;
  grad_ptr(loss.id)[0] += seed;

  for (int id = loss.id; id >= 0; --id) {
    const Node& n = nodes_[id];
    if (!n.needs_grad || n.ext >= 0 || n.op == OpKind::kInput) continue;
    const T* g = grads_.data() + n.offset;
    const int size = n.shape.size();
    auto wants = [&](int input) { return input >= 0 && nodes_[input].needs_grad; };
    switch (n.op) {
      case OpKind::kInput:
      case OpKind::kParam:
        break;
      case OpKind::kRow: {
        const int cols = nodes_[n.a].shape.cols;
        T* gt = grad_ptr(n.a) + static_cast<std::ptrdiff_t>(n.iarg) * cols;
        for (int i = 0; i < size; ++i) gt[i] += g[i];
        break;
      }
      case OpKind::kMatVec:
      case OpKind::kAffine: {
        const Shape ws = nodes_[n.a].shape;
        if (wants(n.a)) kernels::OuterAccumulate<T>(ws.rows, ws.cols, g, value_ptr(n.b), grad_ptr(n.a));
        if (wants(n.b)) kernels::GemvTransposeAccumulate<T>(ws.rows, ws.cols, value_ptr(n.a), g, grad_ptr(n.b));
        if (n.op == OpKind::kAffine && wants(n.c)) {
          T* gb = grad_ptr(n.c);
          for (int i = 0; i < size; ++i) gb[i] += g[i];
        }
        break;
      }
      case OpKind::kAdd: {
        if (wants(n.a)) {
          T* ga = grad_ptr(n.a);
          for (int i = 0; i < size; ++i) ga[i] += g[i];
        }
        if (wants(n.b)) {
          T* gb = grad_ptr(n.b);
          for (int i = 0; i < size; ++i) gb[i] += g[i];
        }
        break;
      }
      case OpKind::kAddScalar: {
        T* ga = grad_ptr(n.a);
        for (int i = 0; i < size; ++i) ga[i] += g[i];
        break;
      }
      case OpKind::kScale: {
        T* ga = grad_ptr(n.a);
        for (int i = 0; i < size; ++i) ga[i] += g[i] * n.sarg;
        break;
      }
      case OpKind::kHadamard: {
        const T* pa = value_ptr(n.a);
        const T* pb = value_ptr(n.b);
        if (wants(n.a)) {
          T* ga = grad_ptr(n.a);
          for (int i = 0; i < size; ++i) ga[i] += g[i] * pb[i];
        }
        if (wants(n.b)) {
          T* gb = grad_ptr(n.b);
          for (int i = 0; i < size; ++i) gb[i] += g[i] * pa[i];
        }
        break;
      }
      case OpKind::kSigmoid: {
        const T* y = values_.data() + n.offset;
        T* ga = grad_ptr(n.a);
        for (int i = 0; i < size; ++i) ga[i] += g[i] * y[i] * (T(1) - y[i]);
        break;
      }
      case OpKind::kTanh: {
        const T* y = values_.data() + n.offset;
        T* ga = grad_ptr(n.a);
        for (int i = 0; i < size; ++i) ga[i] += g[i] * (T(1) - y[i] * y[i]);
        break;
      }
      case OpKind::kSoftplus: {
        const T* x = value_ptr(n.a);
        T* ga = grad_ptr(n.a);
        for (int i = 0; i < size; ++i) ga[i] += g[i] * StableSigmoid(x[i]);
        break;
      }
      case OpKind::kSlice: {
        T* ga = grad_ptr(n.a) + n.iarg;
        for (int i = 0; i < size; ++i) ga[i] += g[i];
        break;
      }
      case OpKind::kGaussSample: {
        if (wants(n.a)) {
          T* gm = grad_ptr(n.a);
          for (int i = 0; i < size; ++i) gm[i] += g[i];
        }
        if (wants(n.b)) {
          T* gs = grad_ptr(n.b);
          for (int i = 0; i < size; ++i) gs[i] += g[i] * aux_[n.aux + i];
        }
        break;
      }
      case OpKind::kMask: {
        T* ga = grad_ptr(n.a);
        for (int i = 0; i < size; ++i) ga[i] += g[i] * aux_[n.aux + i];
        break;
      }
      case OpKind::kKl: {
        const T* pm = value_ptr(n.a);
        const T* ps = value_ptr(n.b);
        const int m = nodes_[n.a].shape.size();
        if (wants(n.a)) {
          T* gm = grad_ptr(n.a);
          for (int i = 0; i < m; ++i) gm[i] += g[0] * pm[i];
        }
        if (wants(n.b)) {
          T* gs = grad_ptr(n.b);
          for (int i = 0; i < m; ++i) gs[i] += g[0] * (ps[i] - T(1) / ps[i]);
        }
        break;
      }
      case OpKind::kSum:
      case OpKind::kMean: {
        const int m = nodes_[n.a].shape.size();
        const T scale = n.op == OpKind::kMean ? g[0] / static_cast<T>(m) : g[0];
        T* ga = grad_ptr(n.a);
        for (int i = 0; i < m; ++i) ga[i] += scale;
        break;
      }
      case OpKind::kMse: {
        const T* pa = value_ptr(n.a);
        const T* pb = value_ptr(n.b);
        const int m = nodes_[n.a].shape.size();
        const T scale = T(2) * g[0] / static_cast<T>(m);
        if (wants(n.a)) {
          T* ga = grad_ptr(n.a);
          for (int i = 0; i < m; ++i) ga[i] += scale * (pa[i] - pb[i]);
        }
        if (wants(n.b)) {
          T* gb = grad_ptr(n.b);
          for (int i = 0; i < m; ++i) gb[i] -= scale * (pa[i] - pb[i]);
        }
        break;
      }
    }
  }
}

template class ParamStore<float>;
template class ParamStore<double>;
template class GradBuffer<float>;
template class GradBuffer<double>;
template class Graph<float>;
template class Graph<double>;

}  // namespace bcm::ad
