#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "headlab/numerics/types.hpp"

namespace headlab {

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// First/second moment estimates for a fixed list of parameter tensors.
struct AdamState {
  AdamOptions options;
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;
  std::uint64_t step = 0;

  AdamState() = default;
  AdamState(AdamOptions opts, std::span<const Matrix* const> params);
};

/// One bias-corrected Adam update, in place:
///   m <- b1 m + (1-b1) g,  v <- b2 v + (1-b2) g^2,
///   theta <- theta - lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps).
/// Throws InvalidInput when the number or shapes of tensors disagree.
void adam_step(AdamState& state, std::span<Matrix* const> params, std::span<const Matrix* const> grads);

}  // namespace headlab
