#include "headlab/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "headlab/errors.hpp"

namespace headlab {

double nmse(const Vector& preds, const Vector& targets) {
  if (preds.size() != targets.size()) throw InvalidInput("nmse: length mismatch");
  if (targets.size() < 2) throw InvalidInput("nmse: need at least 2 points");
  const double mean = targets.mean();
  const double var = (targets.array() - mean).square().mean();
  if (!(var > 0.0)) throw InvalidInput("nmse: targets have zero variance");
  return (preds - targets).squaredNorm() / static_cast<double>(targets.size()) / var;
}

ReversalScore weighted_reversal_score(const ErrByLength& err) {
  if (err.size() < 2) throw InvalidInput("weighted_reversal_score: need at least 2 lengths");
  std::vector<double> e;
  for (const auto& [len, v] : err) e.push_back(v);
  const auto [lo, hi] = std::minmax_element(e.begin(), e.end());
  const double width = *hi - *lo;
  if (!(width > 0.0)) return {0.0, true};
  double total = 0.0;
  for (std::size_t i = 0; i < e.size(); ++i)
    for (std::size_t j = i + 1; j < e.size(); ++j) total += std::max(e[i] - e[j], 0.0);
  return {total / width, false};
}

ErrByLength row(const ErrTable& table, Eigen::Index heads) {
  ErrByLength out;
  for (const auto& [key, v] : table)
    if (key.first == heads) out[key.second] = v;
  return out;
}

double ScalingFit::predict(Eigen::Index heads, Eigen::Index length) const {
  const double T = static_cast<double>(length);
  return c * std::pow(T, beta_exp) * std::exp(alpha * static_cast<double>(heads) / std::pow(T, delta));
}

namespace {

double median(std::vector<double> v) {
  const auto mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  double m = v[mid];
  if (v.size() % 2 == 0) {
    const double lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
    m = 0.5 * (m + lower);
  }
  return m;
}

}  // namespace

Vector lad_regression(const Matrix& design, const Vector& y, int iterations) {
  if (design.rows() != y.size() || design.rows() < design.cols())
    throw InvalidInput("lad_regression: need at least as many rows as coefficients");
  constexpr double kFloor = 1e-12;
  Vector coef = design.colPivHouseholderQr().solve(y);
  Vector weights(y.size());
  for (int it = 0; it < iterations; ++it) {
    const Vector r = y - design * coef;
    for (Eigen::Index i = 0; i < r.size(); ++i) weights(i) = 1.0 / std::max(std::abs(r(i)), kFloor);
    const Vector sw = weights.cwiseSqrt();
    const Matrix wd = sw.asDiagonal() * design;
    const Vector wy = sw.cwiseProduct(y);
    coef = wd.colPivHouseholderQr().solve(wy);
    const Vector r2 = y - design * coef;
    coef(0) += median(std::vector<double>(r2.data(), r2.data() + r2.size()));
  }
  return coef;
}

ScalingFit fit_scaling_law(const ErrTable& table, const std::vector<Eigen::Index>& drop,
                           const ScalingFitOptions& options) {
  std::vector<std::tuple<Eigen::Index, Eigen::Index, double>> points;
  std::set<Eigen::Index> hs, ts;
  for (const auto& [key, v] : table) {
    if (std::find(drop.begin(), drop.end(), key.first) != drop.end()) continue;
    if (!(v > 0.0) || !std::isfinite(v)) throw InvalidInput("fit_scaling_law: errors must be positive and finite");
    if (key.second <= 0) throw InvalidInput("fit_scaling_law: lengths must be positive");
    points.emplace_back(key.first, key.second, v);
    hs.insert(key.first);
    ts.insert(key.second);
  }
  if (hs.size() < 3 || ts.size() < 2)
    throw InvalidInput("fit_scaling_law: need >= 3 head counts and >= 2 lengths after drops");
  if (!(options.delta_step > 0.0) || options.delta_min > options.delta_max)
    throw InvalidInput("fit_scaling_law: bad delta grid");

  const auto m = static_cast<Eigen::Index>(points.size());
  Vector y(m);
  for (Eigen::Index i = 0; i < m; ++i) y(i) = std::log(std::get<2>(points[static_cast<std::size_t>(i)]));

  ScalingFit best;
  best.objective = std::numeric_limits<double>::infinity();
  const int steps = static_cast<int>(std::floor((options.delta_max - options.delta_min) / options.delta_step + 1e-9));
  for (int k = 0; k <= steps; ++k) {
    // rounded so grid points such as 0.25 are exact
    const double delta = std::round((options.delta_min + k * options.delta_step) * 1e9) / 1e9;
    Matrix design(m, 3);
    for (Eigen::Index i = 0; i < m; ++i) {
      const auto& [h, T, e] = points[static_cast<std::size_t>(i)];
      const double t = static_cast<double>(T);
      design(i, 0) = 1.0;
      design(i, 1) = std::log(t);
      design(i, 2) = static_cast<double>(h) / std::pow(t, delta);
    }
    const Vector coef = lad_regression(design, y, options.lad_iterations);
    const double mae = (y - design * coef).cwiseAbs().mean();
    if (mae < best.objective) {
      best.objective = mae;
      best.c = std::exp(coef(0));
      best.beta_exp = coef(1);
      best.alpha = coef(2);
      best.delta = delta;
    }
  }
  best.dropped = drop;
  for (const auto& [h, T, e] : points) best.residuals.emplace_back(h, T, std::log(e) - std::log(best.predict(h, T)));
  return best;
}

double log_log_slope(const ErrByLength& err) {
  if (err.size() < 2) throw InvalidInput("log_log_slope: need at least 2 lengths");
  std::vector<double> x, y;
  for (const auto& [len, v] : err) {
    if (!(v > 0.0)) throw InvalidInput("log_log_slope: errors must be positive");
    x.push_back(std::log(static_cast<double>(len)));
    y.push_back(std::log(v));
  }
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) mx += x[i] / n, my += y[i] / n;
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  return sxy / sxx;
}

double geometric_mean(const ErrByLength& err) {
  if (err.empty()) throw InvalidInput("geometric_mean: empty row");
  double s = 0.0;
  for (const auto& [len, v] : err) {
    if (!(v > 0.0)) throw InvalidInput("geometric_mean: errors must be positive");
    s += std::log(v);
  }
  return std::exp(s / static_cast<double>(err.size()));
}

std::optional<Eigen::Index> detect_transition(const ErrTable& table, const TransitionOptions& options) {
  std::set<Eigen::Index> heads;
  for (const auto& [key, v] : table) heads.insert(key.first);
  if (heads.size() < 3) return std::nullopt;
  for (auto h : heads) {
    if (!heads.contains(h - 1)) continue;
    const auto cur = row(table, h);
    const auto prev = row(table, h - 1);
    if (cur.size() < 2 || prev.empty()) continue;
    const bool dropped = geometric_mean(prev) >= options.drop_factor * geometric_mean(cur);
    const bool flat = log_log_slope(cur) <= options.max_log_slope;
    if (dropped && flat) return h;
  }
  return std::nullopt;
}

}  // namespace headlab
