#pragma once

#include <map>
#include <optional>
#include <utility>
#include <vector>

#include "headlab/numerics/types.hpp"

namespace headlab {

/// Mean squared error over the population variance of the targets (1 - R^2).
/// Throws InvalidInput for fewer than 2 points, mismatched lengths or
/// constant targets.
template <typename DP, typename DT>
double nmse(const Eigen::MatrixBase<DP>& preds, const Eigen::MatrixBase<DT>& targets);

double nmse(const Vector& preds, const Vector& targets);

/// err(T) for one head count, keyed by sequence length.
using ErrByLength = std::map<Eigen::Index, double>;

struct ReversalScore {
  double score = 0.0;
  bool degenerate = false;  // max err == min err; score reported as 0
};

/// R(h) = (1 / w_h) sum_{T1 < T2} max(err(T1) - err(T2), 0) with
/// w_h = max_T err - min_T err.
ReversalScore weighted_reversal_score(const ErrByLength& err);

/// err(h, T) keyed by (h, T).
using ErrTable = std::map<std::pair<Eigen::Index, Eigen::Index>, double>;

/// All lengths of one head count.
ErrByLength row(const ErrTable& table, Eigen::Index heads);

/// Fitted log err ~ log c + beta_exp log T + alpha h / T^delta.
struct ScalingFit {
  double c = 0.0;
  double beta_exp = 0.0;
  double alpha = 0.0;
  double delta = 0.0;
  double objective = 0.0;  // mean |residual| in log space
  std::vector<Eigen::Index> dropped;
  /// (h, T, residual) for every point used in the fit.
  std::vector<std::tuple<Eigen::Index, Eigen::Index, double>> residuals;

  double predict(Eigen::Index heads, Eigen::Index length) const;
};

struct ScalingFitOptions {
  double delta_min = 0.05;
  double delta_max = 2.0;
  double delta_step = 0.05;
  int lad_iterations = 200;
};

/// Grid search over delta with a least-absolute-deviation fit of
/// (log c, beta_exp, alpha) at each grid point. Rows whose h is in `drop`
/// are excluded. Needs >= 3 distinct h and >= 2 distinct T after drops and
/// strictly positive errors.
ScalingFit fit_scaling_law(const ErrTable& table, const std::vector<Eigen::Index>& drop = {},
                           const ScalingFitOptions& options = {});

/// Least-absolute-deviation regression by iteratively reweighted least
/// squares, the intercept (column 0) re-centred on the median residual each
/// iteration. Returns the coefficient vector.
Vector lad_regression(const Matrix& design, const Vector& y, int iterations = 200);

struct TransitionOptions {
  /// Geometric-mean NMSE across T must fall by at least this factor from h-1.
  double drop_factor = 10.0;
  /// Least-squares slope of log NMSE against log T must not exceed this.
  double max_log_slope = 0.0;
};

/// Smallest h whose error drops sharply versus h-1 and no longer grows with
/// T. Needs >= 3 consecutive head counts; returns nullopt when none qualifies.
std::optional<Eigen::Index> detect_transition(const ErrTable& table, const TransitionOptions& options = {});

/// Slope of log err against log T for one row.
double log_log_slope(const ErrByLength& err);

/// Geometric mean of a row.
double geometric_mean(const ErrByLength& err);

// ---------------------------------------------------------------------------

template <typename DP, typename DT>
double nmse(const Eigen::MatrixBase<DP>& preds, const Eigen::MatrixBase<DT>& targets) {
  return nmse(Vector(preds.reshaped()), Vector(targets.reshaped()));
}

}  // namespace headlab
