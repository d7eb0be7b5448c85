#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "headlab/numerics/rng.hpp"
#include "headlab/numerics/tape.hpp"
#include "headlab/numerics/types.hpp"
#include "headlab/tasks.hpp"

namespace headlab {

/// Shape of a single-layer h-head transformer. No positional encoding is
/// used: the model is permutation invariant in its tokens.
struct ModelConfig {
  Eigen::Index heads = 1;       // h
  Eigen::Index head_dim = 8;    // n, per-head embedding dimension
  Eigen::Index hidden = 32;     // N, hidden width of both MLPs
  Eigen::Index input_dim = 4;   // d
  Eigen::Index length = 8;      // T
  double beta = 1.0;            // softmax scale, fixed (not trained)

  Eigen::Index embed_dim() const { return heads * head_dim; }  // E = n h
  void validate() const;
};

/// All weights of
///   y = F(c0 + W_O Concat_i( sum_t softmax_beta[(W_Qi c0)^T W_Ki x^(t)] W_Vi x^(t) ))
/// with x^(t) = P(x(t)) a two-layer ReLU encoder and F a two-layer GeLU MLP.
/// Dense layers use the y = x W^T + b convention (W is out x in).
struct TransformerParams {
  ModelConfig config;
  Matrix enc_w1, enc_b1;  // N x d, 1 x N
  Matrix enc_w2, enc_b2;  // E x N, 1 x E
  Matrix cls;             // 1 x E, the classification token c0
  std::vector<Matrix> w_q, w_k, w_v;  // h tensors of n x E
  Matrix w_o;             // E x E
  Matrix ffn_w1, ffn_b1;  // N x E, 1 x N
  Matrix ffn_w2, ffn_b2;  // 1 x N, 1 x 1

  /// Every trainable tensor, in a fixed order matching tensor_names().
  std::vector<Matrix*> tensors();
  std::vector<const Matrix*> tensors() const;
  std::vector<std::string> tensor_names() const;
  /// Throws InvalidInput when a tensor shape disagrees with the config.
  void validate() const;
};

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for every tensor; c0 uses fan_in = E.
TransformerParams init_params(const ModelConfig& config, CounterRng rng);

struct ParameterCount {
  std::size_t encoder = 0;    // P_phi weights and biases
  std::size_t ffn = 0;        // feed-forward block weights and biases
  std::size_t attention = 0;  // W_Q, W_K, W_V, W_O and c0, reported separately
  /// k: the count used throughout, encoder + ffn.
  std::size_t mlp() const { return encoder + ffn; }
};

ParameterCount parameter_count(const ModelConfig& config);
ParameterCount parameter_count(const TransformerParams& params);

/// The vector fed to the feed-forward block: c0 + W_O Concat(head outputs).
Vector post_attention(const TransformerParams& params, const Sequence& x);

/// Attention weights of every head (h x T).
Matrix attention_weights(const TransformerParams& params, const Sequence& x);

double forward(const TransformerParams& params, const Sequence& x);

/// Predictions for `batch` sequences stored as consecutive T-row blocks of `tokens`.
Vector forward_batch(const TransformerParams& params, const Matrix& tokens, Eigen::Index batch);

/// Mean-squared-error loss of a batch recorded on a Tape.
struct LossGraph {
  Tape tape;
  std::vector<Tape::Var> params;  // same order as TransformerParams::tensors()
  Tape::Var tokens;               // (B*T) x d constant
  Tape::Var targets;              // B x 1 constant
  Tape::Var prediction;           // B x 1
  Tape::Var loss;                 // 1 x 1

  /// Replace parameters and batch on the recorded graph; buffers are reused.
  void load(const TransformerParams& params, const Matrix& tokens, const Vector& targets);
};

LossGraph build_loss_graph(const TransformerParams& params, const Matrix& tokens, const Vector& targets);

/// Stack the token matrices of `records[idx]` into one (B*T) x d matrix.
Matrix stack_tokens(const std::vector<Record>& records, std::span<const std::size_t> idx);

/// Flat JSON checkpoint: config plus named row-major tensors. Values
/// round-trip bit-exactly.
std::string checkpoint_to_json(const TransformerParams& params);
TransformerParams checkpoint_from_json(const std::string& text);

}  // namespace headlab
