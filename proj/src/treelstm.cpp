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

#include "bcm/treelstm.hpp"

#include <algorithm>
#include <cmath>

namespace bcm {

std::string ToString(BottleneckKind kind) {
  switch (kind) {
    case BottleneckKind::kNone:
      return "none";
    case BottleneckKind::kDvib:
      return "dvib";
    case BottleneckKind::kDropout:
      return "dropout";
    case BottleneckKind::kHiddenDim:
      return "hidden-dim";
  }
  return "none";
}

BottleneckKind ParseBottleneckKind(const std::string& text) {
  if (text == "none" || text == "base") return BottleneckKind::kNone;
  if (text == "dvib") return BottleneckKind::kDvib;
  if (text == "dropout") return BottleneckKind::kDropout;
  if (text == "hidden-dim" || text == "hidden") return BottleneckKind::kHiddenDim;
  throw ConfigError("unknown bottleneck kind '" + text + "'");
}

int TokenId(const ExprNode& node) {
  if (node.leaf) {
    if (node.numeral < kMinNumeral || node.numeral > kMaxNumeral) {
      throw std::out_of_range(fmt::format("numeral {} is out of vocabulary", node.numeral));
    }
    return node.numeral - kMinNumeral;
  }
  return kVocabularySize - 2 + (node.op == Op::kPlus ? 0 : 1);
}

void ModelConfig::Validate() const {
  if (embedding_dim <= 0 || hidden_dim <= 0 || head_hidden <= 0) {
    throw ConfigError(fmt::format("model dimensions must be positive (embedding {}, hidden {}, head {})",
                                  embedding_dim, hidden_dim, head_hidden));
  }
  if (!(beta >= 0.0)) throw ConfigError(fmt::format("beta {} must be >= 0", beta));
  if (!(dropout >= 0.0 && dropout < 1.0)) {
    throw ConfigError(fmt::format("dropout {} outside [0, 1)", dropout));
  }
  if (!(sigma_floor > 0.0)) throw ConfigError("sigma_floor must be positive");
  if (!std::isfinite(sigma_bias_init)) throw ConfigError("sigma_bias_init must be finite");
  if (head_activation != "tanh") throw ConfigError("unsupported head_activation " + head_activation);
  if (init != "uniform_fan_in") throw ConfigError("unsupported init " + init);
  if (kind != BottleneckKind::kDvib && beta != 0.0) {
    throw ConfigError("beta is only meaningful for the dvib bottleneck");
  }
  if (kind != BottleneckKind::kDropout && dropout != 0.0) {
    throw ConfigError("dropout is only meaningful for the dropout bottleneck");
  }
}

namespace {

struct TensorSpec {
  std::string name;
  ad::Shape shape;
  int fan_in;  // 0 marks the embedding table
};

std::vector<TensorSpec> Layout(const ModelConfig& c) {
  const int d = c.hidden_dim;
  const int e = c.embedding_dim;
  const int k = c.head_hidden;
  return {
      {"embedding", {kVocabularySize, e}, 0},
      {"cell.W", {4 * d, e}, e},
      {"cell.b", {4 * d, 1}, e},
      {"cell.U_left", {5 * d, d}, d},
      {"cell.U_right", {5 * d, d}, d},
      {"vib.h.mu.W", {d, d}, d},
      {"vib.h.mu.b", {d, 1}, d},
      {"vib.h.sigma.W", {d, d}, d},
      {"vib.h.sigma.b", {d, 1}, d},
      {"vib.c.mu.W", {d, d}, d},
      {"vib.c.mu.b", {d, 1}, d},
      {"vib.c.sigma.W", {d, d}, d},
      {"vib.c.sigma.b", {d, 1}, d},
      {"head.1.W", {k, d}, d},
      {"head.1.b", {k, 1}, d},
      {"head.2.W", {1, k}, k},
      {"head.2.b", {1, 1}, k},
  };
}

}  // namespace

ad::ParamStore<float> InitParams(const ModelConfig& config, std::uint64_t seed) {
  config.Validate();
  std::mt19937_64 rng(seed);
  ad::ParamStore<float> store;
  for (const TensorSpec& spec : Layout(config)) {
    ad::Tensor<float>& t = store.Add(spec.name, spec.shape);
    if (spec.name.ends_with("sigma.b")) {
      std::fill(t.value.begin(), t.value.end(), static_cast<float>(config.sigma_bias_init));
    } else if (spec.fan_in == 0) {
      std::normal_distribution<float> normal(0.0f, 1.0f);
      for (float& v : t.value) v = normal(rng);
    } else {
      const float bound = 1.0f / std::sqrt(static_cast<float>(spec.fan_in));
      std::uniform_real_distribution<float> uniform(-bound, bound);
      for (float& v : t.value) v = uniform(rng);
    }
  }
  return store;
}

template <typename T>
void CheckLayout(const ModelConfig& config, const ad::ParamStore<T>& params) {
  const auto layout = Layout(config);
  if (params.size() != layout.size()) {
    throw DimensionError(fmt::format("parameter store has {} tensors, model expects {}",
                                     params.size(), layout.size()));
  }
  for (std::size_t i = 0; i < layout.size(); ++i) {
    if (params.name(i) != layout[i].name || params[i].shape != layout[i].shape) {
      throw DimensionError(fmt::format("tensor {} is {} {}, model expects {} {}", i, params.name(i),
                                       ad::ToString(params[i].shape), layout[i].name,
                                       ad::ToString(layout[i].shape)));
    }
  }
}

template void CheckLayout(const ModelConfig&, const ad::ParamStore<float>&);
template void CheckLayout(const ModelConfig&, const ad::ParamStore<double>&);

template <typename T>
TreeLstm<T>::TreeLstm(const ModelConfig& config, const ad::ParamStore<T>& params,
                      ad::GradBuffer<T>* grads, ad::Graph<T>& graph)
    : config_(config), g_(graph) {
  embedding_ = Bind(params, "embedding", grads);
  w_ = Bind(params, "cell.W", grads);
  b_ = Bind(params, "cell.b", grads);
  u_left_ = Bind(params, "cell.U_left", grads);
  u_right_ = Bind(params, "cell.U_right", grads);
  mu_h_w_ = Bind(params, "vib.h.mu.W", grads);
  mu_h_b_ = Bind(params, "vib.h.mu.b", grads);
  sig_h_w_ = Bind(params, "vib.h.sigma.W", grads);
  sig_h_b_ = Bind(params, "vib.h.sigma.b", grads);
  mu_c_w_ = Bind(params, "vib.c.mu.W", grads);
  mu_c_b_ = Bind(params, "vib.c.mu.b", grads);
  sig_c_w_ = Bind(params, "vib.c.sigma.W", grads);
  sig_c_b_ = Bind(params, "vib.c.sigma.b", grads);
  head1_w_ = Bind(params, "head.1.W", grads);
  head1_b_ = Bind(params, "head.1.b", grads);
  head2_w_ = Bind(params, "head.2.W", grads);
  head2_b_ = Bind(params, "head.2.b", grads);
}

template <typename T>
typename TreeLstm<T>::Var TreeLstm<T>::Bind(const ad::ParamStore<T>& params, const char* name,
                                            ad::GradBuffer<T>* grads) {
  const std::size_t index = params.index_of(name);
  const ad::Tensor<T>& tensor = params[index];
  std::span<T> grad;
  if (grads != nullptr && tensor.requires_grad) grad = (*grads)[index];
  return g_.Param(tensor, grad);
}

template <typename T>
void TreeLstm<T>::DrawNormal(std::vector<T>& out, const ForwardOptions& options) {
  out.assign(static_cast<std::size_t>(config_.hidden_dim), T(0));
  if (options.zero_noise) return;
  if (options.rng == nullptr) throw std::logic_error("train-mode forward requires an rng");
  std::normal_distribution<double> normal(0.0, 1.0);
  for (T& v : out) v = static_cast<T>(normal(*options.rng));
}

template <typename T>
void TreeLstm<T>::DrawKeepMask(std::vector<T>& out, const ForwardOptions& options) {
  if (options.zero_noise) {
    out.assign(static_cast<std::size_t>(config_.hidden_dim), T(1));
    return;
  }
  if (options.rng == nullptr) throw std::logic_error("train-mode forward requires an rng");
  bcm::DrawKeepMask(out, config_.hidden_dim, config_.dropout, *options.rng);
}

template <typename T>
typename TreeLstm<T>::DvibOutput TreeLstm<T>::Dvib(Var x, char which, const ForwardOptions& options) {
  const bool hidden = which == 'h';
  DvibOutput out;
  out.mu = g_.Affine(hidden ? mu_h_w_ : mu_c_w_, x, hidden ? mu_h_b_ : mu_c_b_);
  Var pre_sigma = g_.Affine(hidden ? sig_h_w_ : sig_c_w_, x, hidden ? sig_h_b_ : sig_c_b_);
  out.sigma = g_.AddScalar(g_.Softplus(pre_sigma), static_cast<T>(config_.sigma_floor));
  if (options.mode == ad::Mode::kTrain) {
    DrawNormal(scratch_, options);
    out.z = g_.GaussSample(out.mu, out.sigma, scratch_);
  } else {
    out.z = out.mu;
  }
  out.kl = g_.KlStdNormal(out.mu, out.sigma);
  return out;
}

template <typename T>
NodeState<T> TreeLstm<T>::NodeForward(int token, const NodeState<T>* left, const NodeState<T>* right,
                                      const ForwardOptions& options) {
  const int d = config_.hidden_dim;
  const bool internal = left != nullptr;
  if (internal != (right != nullptr)) {
    throw DimensionError("binary Tree-LSTM node needs zero or two children");
  }
  if (internal) {
    for (const NodeState<T>* child : {left, right}) {
      if (g_.shape(child->out_h) != ad::Shape{d, 1} || g_.shape(child->out_c) != ad::Shape{d, 1}) {
        throw DimensionError(fmt::format("child state {} does not match hidden_dim {}",
                                         ad::ToString(g_.shape(child->out_h)), d));
      }
    }
  }

  Var x = g_.Row(embedding_, token);
  Var pre = g_.Affine(w_, x, b_);  // [i, o, u, f]
  Var iou;
  Var f_left, f_right;
  if (internal) {
    Var from_children = g_.Add(g_.MatVec(u_left_, left->out_h), g_.MatVec(u_right_, right->out_h));
    iou = g_.Add(g_.Slice(pre, 0, 3 * d), g_.Slice(from_children, 0, 3 * d));
    Var f_input = g_.Slice(pre, 3 * d, d);
    f_left = g_.Sigmoid(g_.Add(f_input, g_.Slice(from_children, 3 * d, d)));
    f_right = g_.Sigmoid(g_.Add(f_input, g_.Slice(from_children, 4 * d, d)));
  } else {
    iou = g_.Slice(pre, 0, 3 * d);
  }
  Var i = g_.Sigmoid(g_.Slice(iou, 0, d));
  Var o = g_.Sigmoid(g_.Slice(iou, d, d));
  Var u = g_.Tanh(g_.Slice(iou, 2 * d, d));

  NodeState<T> state;
  state.c = g_.Hadamard(i, u);
  if (internal) {
    state.c = g_.Add(state.c, g_.Add(g_.Hadamard(f_left, left->out_c), g_.Hadamard(f_right, right->out_c)));
  }
  state.h = g_.Hadamard(o, g_.Tanh(state.c));

  if (!internal) {
    state.out_h = state.h;
    state.out_c = state.c;
    return state;
  }

  Var h = state.h;
  Var c = state.c;
  if (config_.dropout > 0.0) {
    const T p = static_cast<T>(config_.dropout);
    const bool masking = options.mode == ad::Mode::kTrain && !options.zero_noise;
    if (masking) DrawKeepMask(scratch_, options);
    h = masking ? g_.Mask(h, scratch_) : (options.mode == ad::Mode::kEval ? g_.Scale(h, T(1) - p) : h);
    if (masking) DrawKeepMask(scratch_, options);
    c = masking ? g_.Mask(c, scratch_) : (options.mode == ad::Mode::kEval ? g_.Scale(c, T(1) - p) : c);
  }
  DvibOutput vh = Dvib(h, 'h', options);
  DvibOutput vc = Dvib(c, 'c', options);
  state.out_h = vh.z;
  state.out_c = vc.z;
  state.mu_h = vh.mu;
  state.sigma_h = vh.sigma;
  state.kl_h = vh.kl;
  state.mu_c = vc.mu;
  state.sigma_c = vc.sigma;
  state.kl_c = vc.kl;
  return state;
}

template <typename T>
typename TreeLstm<T>::Var TreeLstm<T>::Head(Var root_h, Var* penult) {
  Var hidden = g_.Tanh(g_.Affine(head1_w_, root_h, head1_b_));
  if (penult != nullptr) *penult = hidden;
  return g_.Affine(head2_w_, hidden, head2_b_);
}

template <typename T>
TreeOutput<T> TreeLstm<T>::Forward(const ExprTree& tree, const ForwardOptions& options) {
  TreeOutput<T> out;
  out.states.resize(static_cast<std::size_t>(tree.node_count()));
  // Children carry larger preorder ids than their parent.
  for (int id = tree.node_count() - 1; id >= 0; --id) {
    const ExprNode& n = tree.node(id);
    if (n.leaf) {
      out.states[id] = NodeForward(TokenId(n), nullptr, nullptr, options);
    } else {
      out.states[id] = NodeForward(TokenId(n), &out.states[n.left], &out.states[n.right], options);
      out.node_kl.push_back(g_.Add(out.states[id].kl_h, out.states[id].kl_c));
    }
  }
  if (!out.node_kl.empty()) {
    Var total = out.node_kl.front();
    for (std::size_t k = 1; k < out.node_kl.size(); ++k) total = g_.Add(total, out.node_kl[k]);
    out.info_loss = g_.Scale(total, T(1) / static_cast<T>(out.node_kl.size()));
  }
  out.prediction = Head(out.states[0].out_h, &out.penult);
  return out;
}

template <typename T>
Inference Infer(const ModelConfig& config, const ad::ParamStore<T>& params, const ExprTree& tree,
                ad::Graph<T>& scratch) {
  scratch.Clear();
  TreeLstm<T> model(config, params, nullptr, scratch);
  TreeOutput<T> out = model.Forward(tree, ForwardOptions{.mode = ad::Mode::kEval});
  Inference result;
  result.prediction = static_cast<double>(scratch.scalar(out.prediction));
  const auto penult = scratch.value(out.penult);
  result.penult.assign(penult.begin(), penult.end());
  return result;
}

template Inference Infer(const ModelConfig&, const ad::ParamStore<float>&, const ExprTree&,
                         ad::Graph<float>&);
template Inference Infer(const ModelConfig&, const ad::ParamStore<double>&, const ExprTree&,
                         ad::Graph<double>&);

template class TreeLstm<float>;
template class TreeLstm<double>;

}  // namespace bcm
