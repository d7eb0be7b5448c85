#pragma once

#include <optional>
#include <string>
#include <vector>

#include "headlab/constructions/dense_net.hpp"
#include "headlab/tasks.hpp"

namespace headlab {

/// A two-layer approximation of one component f_i with its sup error delta.
struct ComponentNet {
  DenseNet net;
  double delta = 0.0;
};

struct SoftminOptions {
  /// Number of heads; must equal D. 0 means D.
  Eigen::Index heads = 0;
  /// Use this beta instead of beta_eps.
  std::optional<double> beta;
  double beta_cap = 700.0;
  /// Nets for f_i in the task's own orientation, one per component. Affine
  /// components may be left out (empty vector) and are then built exactly.
  std::vector<ComponentNet> components;
  /// Net for F0 on [0,1]^D when F0 is not affine.
  std::optional<ComponentNet> outer;
  /// Throw when the achieved error bound exceeds epsilon.
  bool enforce_epsilon = true;
};

/// Head-per-feature single-layer transformer. Head i reads the block
///   x^(i)(t) = (Psi_i(x(t)), r_i(t)),  r_i(t) = 0 on S_i, -1 elsewhere,
/// scores rho_i(t) = -Psi_i(x(t)) + r_i(t) and returns the softmin readout
/// z~_i = sum_t sigma[rho_i](t) Psi_i(x(t)). Components in max mode are
/// handled as 1 - min(1 - f), the reflection absorbed into the outer net.
struct SoftminHeadModel {
  Eigen::Index length = 0;  // T
  Eigen::Index dim = 0;     // d
  Eigen::Index heads = 0;   // h = D, per-head dimension 2
  double beta = 1.0;
  double epsilon = 0.0;
  double outer_lipschitz = 1.0;  // L0
  double component_delta = 0.0;  // max_i delta_i
  double outer_delta = 0.0;
  /// delta_Phi + L0 max_i (delta_i + softmin bound_i).
  double achieved_bound = 0.0;
  std::vector<std::string> warnings;

  std::vector<DenseNet> psi;              // d -> 1, min orientation
  std::vector<std::vector<double>> gates; // r_i(t)
  std::vector<std::vector<Eigen::Index>> index_sets;
  Vector cls;                             // E = 2h
  std::vector<Matrix> w_q, w_k, w_v;      // 2 x E each
  Matrix w_o;                             // E x E
  DenseNet ffn;                           // E -> 1

  Eigen::Index embed_dim() const { return 2 * heads; }
  /// Encoder output, one row per token (T x E).
  Matrix encode(const Sequence& x) const;
  /// Attention scores rho_i(t), h x T.
  Matrix scores(const Sequence& x) const;
  /// Softmax weights, h x T.
  Matrix attention(const Sequence& x) const;
  /// z~_i for every head.
  Vector readouts(const Sequence& x) const;
  Vector post_attention(const Sequence& x) const;
  double operator()(const Sequence& x) const;
  /// (|S_i| - 1)/(e beta) + T e^-beta.
  double softmin_bound(Eigen::Index head) const;
  /// Largest absolute entry of the attention parameters.
  double max_attention_entry() const;
};

/// max{1, K, log K} with K = 4 C_T L0 D / eps and C_T = max{T/e, T}.
double beta_epsilon(Eigen::Index length, double outer_lipschitz, Eigen::Index intrinsic_dim, double epsilon);

/// (|S| - 1)/(e beta) + T e^-beta.
double softmin_bound(Eigen::Index set_size, Eigen::Index length, double beta);

/// Throws ConstructionError on h != D, beta < 1, a component delta above
/// eps/(4 L0 D), a non-affine piece without a supplied net, or (with
/// enforce_epsilon) an achieved bound above eps.
SoftminHeadModel build_softmin_model(const RetrievalTask& task, double epsilon, const SoftminOptions& options = {});

struct SoftminWitness {
  std::size_t sequence = 0;
  Eigen::Index head = 0;
  double deviation = 0.0;  // z~_i - min_{S_i} Psi_i
  double bound = 0.0;
  Matrix tokens;
};

struct SoftminReport {
  Eigen::Index heads = 0;
  Eigen::Index length = 0;
  double beta = 0.0;
  std::vector<double> bounds;  // per head
  std::size_t sequences = 0;
  double max_observed = 0.0;   // largest deviation over heads and sequences
  double min_observed = 0.0;   // smallest deviation
  double max_slack_ratio = 0.0;  // max deviation / bound
  std::size_t lower_violations = 0;
  std::size_t upper_violations = 0;
  std::vector<SoftminWitness> witnesses;  // first few violations

  bool ok() const { return lower_violations == 0 && upper_violations == 0; }
};

/// Check 0 <= z~_i - min_{t in S_i} Psi_i(x(t)) <= bound_i on every head and
/// sequence. The deviation is accumulated as sum_t sigma(t) (Psi(t) - min).
/// Throws InvalidInput for tokens outside [0,1] or a length mismatch.
SoftminReport verify_softmin_bound(const SoftminHeadModel& model, const std::vector<Sequence>& sequences,
                                   std::size_t max_witnesses = 8);

/// {construction, parameters, bound, max_observed, witnesses, ...}
std::string softmin_report_json(const SoftminReport& report);

/// The task keeping only components `keep` (in that order), with F0 the sum
/// of the kept features. Used to build models that ignore some features.
RetrievalTask restrict_components(const RetrievalTask& task, const std::vector<Eigen::Index>& keep);

/// Sup-norm of the gradient of an affine map in l1.
double affine_lipschitz(const AffineMap& f);

}  // namespace headlab
