#pragma once

#include <cmath>
#include <concepts>
#include <numbers>

#include "headlab/errors.hpp"
#include "headlab/numerics/types.hpp"

namespace headlab {

/// sqrt(2/pi) and the cubic coefficient of the tanh form of GeLU.
inline constexpr double kGeluScale = 0.7978845608028654;
inline constexpr double kGeluCubic = 0.044715;

template <std::floating_point Scalar>
Scalar relu(Scalar x) {
  return x > Scalar(0) ? x : Scalar(0);
}

/// GeLU, tanh approximation: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3))).
template <std::floating_point Scalar>
Scalar gelu(Scalar x) {
  using std::tanh;
  return Scalar(0.5) * x * (Scalar(1) + tanh(Scalar(kGeluScale) * (x + Scalar(kGeluCubic) * x * x * x)));
}

template <std::floating_point Scalar>
Scalar gelu_derivative(Scalar x) {
  using std::tanh;
  const Scalar u = Scalar(kGeluScale) * (x + Scalar(kGeluCubic) * x * x * x);
  const Scalar th = tanh(u);
  const Scalar du = Scalar(kGeluScale) * (Scalar(1) + Scalar(3 * kGeluCubic) * x * x);
  return Scalar(0.5) * (Scalar(1) + th) + Scalar(0.5) * x * (Scalar(1) - th * th) * du;
}

template <typename Derived>
auto relu(const Eigen::MatrixBase<Derived>& x) {
  return x.cwiseMax(typename Derived::Scalar(0));
}

template <typename Derived>
auto gelu(const Eigen::MatrixBase<Derived>& x) {
  return x.unaryExpr([](typename Derived::Scalar v) { return gelu(v); });
}

/// Scaled softmax sigma[s](t) = exp(beta s_t) / sum_t' exp(beta s_t'),
/// evaluated with the maximum subtracted so large beta cannot overflow.
template <typename Derived>
VectorT<typename Derived::Scalar> softmax_beta(const Eigen::MatrixBase<Derived>& scores,
                                               typename Derived::Scalar beta) {
  using Scalar = typename Derived::Scalar;
  if (!(beta > Scalar(0)) || !std::isfinite(static_cast<double>(beta)))
    throw InvalidInput("softmax_beta: beta must be positive and finite");
  if (scores.size() == 0) throw InvalidInput("softmax_beta: empty score vector");
  if (!scores.allFinite()) throw InvalidInput("softmax_beta: non-finite score");
  const auto s = scores.reshaped();
  const Scalar m = s.maxCoeff();
  VectorT<Scalar> p = (beta * (s.array() - m)).exp().matrix();
  p /= p.sum();
  return p;
}

}  // namespace headlab
