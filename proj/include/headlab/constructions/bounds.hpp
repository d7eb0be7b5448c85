#pragma once

#include <cstdint>

#include "headlab/numerics/types.hpp"

namespace headlab {

/// ceil(B / (A sqrt(n))): the width an FFN on R^n needs to separate two
/// inputs at distance A by an output gap B. Saturates at UINT64_MAX.
/// Throws InvalidInput for A <= 0, B < 0, n == 0 or non-finite inputs.
std::uint64_t ffn_width_lower_bound(double a, double b, std::uint64_t n);

/// k = (T/4 - s - D + 1) / ((n + 1) s + 1) - 1, the parameter count below
/// which a model with fewer than D heads cannot reach accuracy.
double head_deficit_parameter_count(Eigen::Index length, Eigen::Index s, Eigen::Index head_dim,
                                    Eigen::Index intrinsic_dim);

}  // namespace headlab
