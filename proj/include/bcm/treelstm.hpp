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

// Binary Tree-LSTM with per-node variational bottlenecks on the hidden and
// cell states, optional dropout on those states, and a two-layer regression
// head. Every model variant shares this architecture; the base model is the
// same network trained with beta = 0 and no dropout.
//
// Parameter layout (d = hidden_dim, e = embedding_dim):
//   embedding        vocab x e        numerals -10..10, then '+', '-'
//   cell.W           4d x e           input contributions to [i, o, u, f]
//   cell.b           4d
//   cell.U_left      5d x d           left-child contributions to [i, o, u, f_left, f_right]
//   cell.U_right     5d x d           right-child contributions, same row order
//   vib.{h,c}.mu.{W,b}       d x d, d
//   vib.{h,c}.sigma.{W,b}    d x d, d
//   head.1.{W,b}     head_hidden x d, head_hidden
//   head.2.{W,b}     1 x head_hidden, 1

#ifndef BCM_TREELSTM_HPP_
#define BCM_TREELSTM_HPP_

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "bcm/autodiff.hpp"
#include "bcm/expr.hpp"

namespace bcm {

enum class BottleneckKind { kNone, kDvib, kDropout, kHiddenDim };

std::string ToString(BottleneckKind kind);
BottleneckKind ParseBottleneckKind(const std::string& text);

inline constexpr int kVocabularySize = (kMaxNumeral - kMinNumeral + 1) + 2;

// Token id of a node: numerals map to [0, 21), '+' to 21 and '-' to 22.
int TokenId(const ExprNode& node);

struct ModelConfig {
  BottleneckKind kind = BottleneckKind::kNone;
  int embedding_dim = 150;
  int hidden_dim = 150;
  int head_hidden = 100;
  double beta = 0.0;
  double dropout = 0.0;
  double sigma_floor = 1e-6;
  // softplus(-4) ~ 0.018: the bottleneck starts nearly noiseless and only the
  // KL term pushes sigma up.
  double sigma_bias_init = -4.0;
  // Recorded for provenance; these are the only supported choices.
  std::string head_activation = "tanh";
  std::string init = "uniform_fan_in";

  // Throws ConfigError on inconsistent values.
  void Validate() const;
  // The information-loss term enters the objective only for the DVIB variant.
  bool uses_kl() const { return kind == BottleneckKind::kDvib && beta > 0.0; }
};

// Embeddings ~ N(0, 1); sigma biases = sigma_bias_init; every other weight and
// bias ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
ad::ParamStore<float> InitParams(const ModelConfig& config, std::uint64_t seed);

// Throws DimensionError when the store does not match the config's layout.
template <typename T>
void CheckLayout(const ModelConfig& config, const ad::ParamStore<T>& params);

// Dropout keep mask: each entry is 0 with probability p, else 1.
template <typename T>
void DrawKeepMask(std::vector<T>& out, int size, double p, std::mt19937_64& rng) {
  out.assign(static_cast<std::size_t>(size), T(1));
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  for (T& v : out) v = uniform(rng) < p ? T(0) : T(1);
}

struct ForwardOptions {
  ad::Mode mode = ad::Mode::kEval;
  // Source of reparameterisation noise and dropout masks in train mode.
  std::mt19937_64* rng = nullptr;
  // Train mode with eps = 0 (z = mu) and no dropout masking.
  bool zero_noise = false;
};

template <typename T>
struct NodeState {
  using Var = typename ad::Graph<T>::Var;
  // Raw LSTM states of the node.
  Var h;
  Var c;
  // States handed to the parent (bottlenecked for internal nodes).
  Var out_h;
  Var out_c;
  // Posterior parameters and KL terms; invalid for leaves.
  Var mu_h, sigma_h, mu_c, sigma_c;
  Var kl_h, kl_c;
};

template <typename T>
struct TreeOutput {
  using Var = typename ad::Graph<T>::Var;
  Var prediction;
  Var penult;
  // kl_h + kl_c per internal node, in post-order.
  std::vector<Var> node_kl;
  // Mean of node_kl; invalid for single-leaf trees.
  Var info_loss;
  std::vector<NodeState<T>> states;  // indexed by node id
};

// Binds a parameter store to a graph for one forward pass. Rebuild after every
// Graph::Clear().
template <typename T>
class TreeLstm {
 public:
  using Var = typename ad::Graph<T>::Var;

  // `grads` may be null (inference); frozen tensors never receive gradients.
  TreeLstm(const ModelConfig& config, const ad::ParamStore<T>& params, ad::GradBuffer<T>* grads,
           ad::Graph<T>& graph);

  NodeState<T> NodeForward(int token, const NodeState<T>* left, const NodeState<T>* right,
                           const ForwardOptions& options);
  // Post-order traversal; the head reads the root's outgoing hidden state.
  TreeOutput<T> Forward(const ExprTree& tree, const ForwardOptions& options);

  struct DvibOutput {
    Var z, mu, sigma, kl;
  };
  // mu = W_mu x + b_mu; sigma = softplus(W_s x + b_s) + floor;
  // z = mu + sigma * eps in train mode, mu otherwise.
  DvibOutput Dvib(Var x, char which, const ForwardOptions& options);

  Var Head(Var root_h, Var* penult);

 private:
  Var Bind(const ad::ParamStore<T>& params, const char* name, ad::GradBuffer<T>* grads);
  void DrawNormal(std::vector<T>& out, const ForwardOptions& options);
  void DrawKeepMask(std::vector<T>& out, const ForwardOptions& options);

  const ModelConfig& config_;
  ad::Graph<T>& g_;
  Var embedding_, w_, b_, u_left_, u_right_;
  Var mu_h_w_, mu_h_b_, sig_h_w_, sig_h_b_;
  Var mu_c_w_, mu_c_b_, sig_c_w_, sig_c_b_;
  Var head1_w_, head1_b_, head2_w_, head2_b_;
  std::vector<T> scratch_;
};

// Inference-mode prediction and penultimate activations for one tree.
struct Inference {
  double prediction = 0.0;
  std::vector<float> penult;
};

template <typename T>
Inference Infer(const ModelConfig& config, const ad::ParamStore<T>& params, const ExprTree& tree,
                ad::Graph<T>& scratch);

extern template class TreeLstm<float>;
extern template class TreeLstm<double>;

}  // namespace bcm

#endif  // BCM_TREELSTM_HPP_
