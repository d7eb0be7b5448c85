#include "headlab/constructions/bounds.hpp"

#include <cmath>
#include <limits>

#include "headlab/errors.hpp"

namespace headlab {

std::uint64_t ffn_width_lower_bound(double a, double b, std::uint64_t n) {
  if (!std::isfinite(a) || !std::isfinite(b)) throw InvalidInput("ffn_width_lower_bound: non-finite input");
  if (!(a > 0.0)) throw InvalidInput("ffn_width_lower_bound: A must be positive");
  if (b < 0.0) throw InvalidInput("ffn_width_lower_bound: B must be non-negative");
  if (n == 0) throw InvalidInput("ffn_width_lower_bound: n must be positive");
  if (b == 0.0) return 0;
  const double q = b / (a * std::sqrt(static_cast<double>(n)));
  constexpr auto kMax = std::numeric_limits<std::uint64_t>::max();
  if (!std::isfinite(q) || q >= static_cast<double>(kMax)) return kMax;
  // a quotient within rounding of an integer is that integer
  const double r = std::round(q);
  if (std::abs(q - r) <= 1e-9 * std::max(1.0, q)) return static_cast<std::uint64_t>(r);
  return static_cast<std::uint64_t>(std::ceil(q));
}

double head_deficit_parameter_count(Eigen::Index length, Eigen::Index s, Eigen::Index head_dim,
                                    Eigen::Index intrinsic_dim) {
  if (length <= 0 || s <= 0 || head_dim <= 0 || intrinsic_dim <= 0)
    throw InvalidInput("head_deficit_parameter_count: arguments must be positive");
  const double num = static_cast<double>(length) / 4.0 - static_cast<double>(s) - static_cast<double>(intrinsic_dim) + 1.0;
  const double den = static_cast<double>((head_dim + 1) * s + 1);
  return num / den - 1.0;
}

}  // namespace headlab
