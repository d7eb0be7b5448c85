#include "headlab/constructions/order_statistics.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "headlab/errors.hpp"

namespace headlab {

OrderStatistics order_statistic_features(const Sequence& x, Eigen::Index coordinate) {
  const Eigen::Index T = x.length();
  if (T == 0 || T % 4 != 0) throw InvalidInput("order_statistic_features: T must be a positive multiple of 4");
  if (coordinate < 0 || coordinate >= x.dim()) throw InvalidInput("order_statistic_features: coordinate out of range");
  const auto m = static_cast<std::size_t>(T / 4);
  std::vector<double> col(x.tokens.col(coordinate).begin(), x.tokens.col(coordinate).end());
  std::vector<double> sorted = col;
  std::sort(sorted.begin(), sorted.end());
  OrderStatistics os;
  os.w = sorted[m - 1];
  os.v = sorted[sorted.size() - m];
  os.y.resize(T);
  os.z.resize(T);
  for (Eigen::Index t = 0; t < T; ++t) {
    const double c = col[static_cast<std::size_t>(t)];
    os.y(t) = std::min(c, os.v);
    os.z(t) = 1.0 - std::max(c, os.w);
  }
  return os;
}

Matrix smooth_selector(const Sequence& x, double q) {
  if (!(q > 0.0) || !std::isfinite(q)) throw InvalidInput("smooth_selector: q must be positive and finite");
  if (!x.tokens.allFinite() || x.tokens.minCoeff() < 0.0 || x.tokens.maxCoeff() > 1.0)
    throw InvalidInput("smooth_selector: tokens must lie in [0,1]");
  Matrix out(x.length(), x.dim());
  for (Eigen::Index j = 0; j < x.dim(); ++j) {
    const auto os = order_statistic_features(x, j);
    for (Eigen::Index t = 0; t < x.length(); ++t) {
      const double upper = 1.0 - os.z(t);  // max(x, w)
      const double lower = os.y(t);        // min(x, v)
      const double a = q * (upper - os.w) * (upper - os.w);
      const double b = q * (lower - os.v) * (lower - os.v);
      const double top = std::max(a, b);
      const double ea = std::exp(a - top), eb = std::exp(b - top);
      out(t, j) = (ea * upper + eb * lower) / (ea + eb);
    }
  }
  return out;
}

}  // namespace headlab
