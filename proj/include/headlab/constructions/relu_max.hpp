#pragma once

#include "headlab/constructions/dense_net.hpp"

namespace headlab {

/// Three-layer ReLU net approximating max_t x_t on [0,1]^T:
///   h1(t,i) = ReLU(x_t - i/n),            i = 0..n-1
///   h2(j)   = ReLU(S_j), ReLU(S_j - 1/n)  with S_j = sum_t h1(t,j)
///   out     = sum_j ReLU(S_j) - ReLU(S_j - 1/n)
/// The output lies in [max, max + 1/n] and is nondecreasing in every input.
struct ReluMaxNet {
  Eigen::Index length = 0;      // T
  Eigen::Index resolution = 0;  // n = ceil(1/eps)
  DenseNet net;

  double operator()(const Vector& x) const { return net(x)(0); }
};

/// Throws InvalidInput unless 0 < eps <= 1 and T >= 1.
ReluMaxNet build_relu_max(Eigen::Index length, double epsilon);

/// The same net wrapped as min x = 1 - max(1 - x); output in [min - 1/n, min].
/// The reflections are folded into the first and last affine maps.
DenseNet build_relu_min(Eigen::Index length, Eigen::Index resolution);

}  // namespace headlab
