#pragma once

#include "headlab/tasks.hpp"

namespace headlab {

/// Order-statistic features of one coordinate j with m = T/4:
///   v = m-th largest, w = m-th smallest,
///   Y_t = min(x(t)_j, v),  1 - Z_t = max(x(t)_j, w).
struct OrderStatistics {
  double v = 0.0;
  double w = 0.0;
  Vector y;  // length T
  Vector z;  // length T
};

/// Throws InvalidInput unless 4 | T and 0 <= j < d.
OrderStatistics order_statistic_features(const Sequence& x, Eigen::Index coordinate);

/// x^_q(t)_j = [e^{q(1-Z-w)^2}(1-Z) + e^{q(Y-v)^2} Y] / [e^{q(1-Z-w)^2} + e^{q(Y-v)^2}]
/// for every t and j, weights normalised by their maximum. Throws InvalidInput
/// unless 4 | T, q > 0 and tokens lie in [0,1].
Matrix smooth_selector(const Sequence& x, double q);

}  // namespace headlab
