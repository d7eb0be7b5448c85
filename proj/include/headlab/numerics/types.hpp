#pragma once

#include <Eigen/Dense>

namespace headlab {

/// Dense row-major matrix of doubles. Row-major so that a block of T
/// consecutive rows is one sequence in batched layouts.
template <typename Scalar>
using MatrixT = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using VectorT = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matrix = MatrixT<double>;
using Vector = VectorT<double>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
  return m.allFinite();
}

}  // namespace headlab
