#include "headlab/constructions/relu_max.hpp"

#include <cmath>

#include "headlab/errors.hpp"

namespace headlab {

namespace {

DenseNet relu_max_layers(Eigen::Index T, Eigen::Index n) {
  const double step = 1.0 / static_cast<double>(n);
  DenseLayer l1{Matrix::Zero(T * n, T), Vector(T * n), true};
  for (Eigen::Index t = 0; t < T; ++t)
    for (Eigen::Index i = 0; i < n; ++i) {
      l1.weight(t * n + i, t) = 1.0;
      l1.bias(t * n + i) = -static_cast<double>(i) * step;
    }
  DenseLayer l2{Matrix::Zero(2 * n, T * n), Vector(2 * n), true};
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index t = 0; t < T; ++t) {
      l2.weight(2 * j, t * n + j) = 1.0;
      l2.weight(2 * j + 1, t * n + j) = 1.0;
    }
    l2.bias(2 * j) = 0.0;
    l2.bias(2 * j + 1) = -step;
  }
  DenseLayer l3{Matrix(1, 2 * n), Vector::Zero(1), false};
  for (Eigen::Index j = 0; j < n; ++j) {
    l3.weight(0, 2 * j) = 1.0;
    l3.weight(0, 2 * j + 1) = -1.0;
  }
  DenseNet net;
  net.layers = {std::move(l1), std::move(l2), std::move(l3)};
  return net;
}

}  // namespace

ReluMaxNet build_relu_max(Eigen::Index length, double epsilon) {
  if (length < 1) throw InvalidInput("build_relu_max: T must be positive");
  if (!(epsilon > 0.0) || epsilon > 1.0) throw InvalidInput("build_relu_max: eps must lie in (0, 1]");
  const auto n = static_cast<Eigen::Index>(std::ceil(1.0 / epsilon - 1e-12));
  return {length, n, relu_max_layers(length, n)};
}

DenseNet build_relu_min(Eigen::Index length, Eigen::Index resolution) {
  if (length < 1 || resolution < 1) throw InvalidInput("build_relu_min: sizes must be positive");
  DenseNet net = relu_max_layers(length, resolution);
  // x -> 1 - x on the way in
  auto& first = net.layers.front();
  first.bias += first.weight * Vector::Ones(length);
  first.weight = -first.weight;
  // y -> 1 - y on the way out
  auto& last = net.layers.back();
  last.weight = -last.weight;
  last.bias = Vector::Ones(1) - last.bias;
  return net;
}

}  // namespace headlab
