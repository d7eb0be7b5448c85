#pragma once

#include <algorithm>
#include <cmath>

#include "headlab/numerics/types.hpp"

namespace headlab {

/// Central-difference gradient of a scalar function of one matrix argument.
/// `f` is called 2 * x.size() times with perturbed copies of x.
template <typename Fn>
Matrix central_difference(Fn&& f, const Matrix& x, double step = 1e-5) {
  Matrix g(x.rows(), x.cols());
  Matrix probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double orig = probe.data()[i];
    probe.data()[i] = orig + step;
    const double up = f(static_cast<const Matrix&>(probe));
    probe.data()[i] = orig - step;
    const double down = f(static_cast<const Matrix&>(probe));
    probe.data()[i] = orig;
    g.data()[i] = (up - down) / (2.0 * step);
  }
  return g;
}

/// Largest entrywise |a - b| / max(|a|, |b|, floor). The floor keeps
/// near-zero entries from turning round-off into huge relative errors.
template <typename DA, typename DB>
double max_relative_error(const Eigen::MatrixBase<DA>& a, const Eigen::MatrixBase<DB>& b, double floor = 1e-4) {
  double worst = 0.0;
  for (Eigen::Index r = 0; r < a.rows(); ++r)
    for (Eigen::Index c = 0; c < a.cols(); ++c) {
      const double x = a(r, c), y = b(r, c);
      const double denom = std::max({std::abs(x), std::abs(y), floor});
      worst = std::max(worst, std::abs(x - y) / denom);
    }
  return worst;
}

}  // namespace headlab
