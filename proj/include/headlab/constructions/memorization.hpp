#pragma once

#include <optional>
#include <vector>

#include "headlab/constructions/dense_net.hpp"
#include "headlab/constructions/softmin.hpp"
#include "headlab/tasks.hpp"

namespace headlab {

struct MemorizationOptions {
  /// Embedding dimension n; 0 means T d.
  Eigen::Index embed_dim = 0;
  /// Same meaning as in SoftminOptions.
  std::vector<ComponentNet> components;
  std::optional<ComponentNet> outer;
};

/// One head with a wide embedding. P(x(t), t) writes x(t) into block t of
/// R^n, c0 = 0 and W_Q = W_K = 0 so attention is uniform and the attended
/// vector is (1/T)(x(1), ..., x(T)). The feed-forward block is the 5-layer
/// stack of F1 (per-token components), F2 (ReLU min per index set) and F3
/// (outer function).
struct MemorizationModel {
  Eigen::Index length = 0;
  Eigen::Index dim = 0;
  Eigen::Index embed = 0;       // n
  Eigen::Index resolution = 0;  // grid size of the ReLU min nets
  double beta = 1.0;
  double achieved_bound = 0.0;  // delta_Phi + L0 (delta + 1/resolution)

  Vector cls;                 // zero
  Matrix w_q, w_k, w_v, w_o;  // n x n
  DenseNet f1, f2, f3;        // 2-, 3- and 2-layer pieces
  DenseNet ffn;               // their 5-layer stack

  Matrix encode(const Sequence& x) const;  // T x n
  Vector post_attention(const Sequence& x) const;
  double operator()(const Sequence& x) const;
  /// F3(F2(F1(u))) evaluated piece by piece.
  double sequential(const Vector& u) const;
};

/// Throws ConstructionError when n < T d, a component does not map the
/// cube into [0,1], or a non-affine piece has no supplied net; InvalidInput
/// for eps outside (0, 1].
MemorizationModel build_memorization_model(const RetrievalTask& task, double epsilon,
                                           const MemorizationOptions& options = {});

}  // namespace headlab
