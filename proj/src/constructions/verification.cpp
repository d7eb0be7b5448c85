#include "headlab/constructions/verification.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <json.hpp>

#include "headlab/constructions/memorization.hpp"
#include "headlab/constructions/order_statistics.hpp"
#include "headlab/constructions/relu_max.hpp"
#include "headlab/constructions/softmin.hpp"
#include "headlab/errors.hpp"
#include "headlab/numerics/rng.hpp"

namespace headlab {

namespace {

constexpr std::size_t kMaxWitnesses = 8;
// Floating-point slack for one-sided and monotonicity checks.
constexpr double kRoundoff = 1e-12;

void add_witness(VerifyReport& r, const Matrix& x) {
  if (r.witnesses.size() < kMaxWitnesses) r.witnesses.emplace_back(x.data(), x.data() + x.size());
}

}  // namespace

VerifyReport verify_relu_max(Eigen::Index length, double epsilon, std::size_t samples, std::uint64_t seed) {
  const auto net = build_relu_max(length, epsilon);
  VerifyReport r;
  r.construction = "relu-max";
  r.parameters = {{"T", static_cast<double>(length)},
                  {"eps", epsilon},
                  {"n", static_cast<double>(net.resolution)},
                  {"width1", static_cast<double>(net.net.hidden_widths()[0])},
                  {"width2", static_cast<double>(net.net.hidden_widths()[1])}};
  r.bound = 1.0 / static_cast<double>(net.resolution);
  auto check = [&](const Vector& x) {
    const double out = net(x), m = x.maxCoeff();
    const double err = std::abs(out - m);
    r.max_observed = std::max(r.max_observed, err);
    ++r.samples;
    if (err > r.bound || out < m - kRoundoff) {
      ++r.violations;
      add_witness(r, x);
    }
  };
  auto rng = CounterRng(seed).split("verify-relu-max");
  for (std::size_t s = 0; s < samples; ++s) check(rng.uniform_matrix(length, 1, 0.0, 1.0));
  if (length <= 16)
    for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << length); ++mask) {
      Vector x(length);
      for (Eigen::Index t = 0; t < length; ++t) x(t) = static_cast<double>((mask >> t) & 1U);
      check(x);
    }
  return r;
}

VerifyReport verify_softmin(Eigen::Index intrinsic_dim, Eigen::Index length, double beta, std::size_t samples,
                            std::uint64_t seed) {
  const auto task = make_coordinate_min_task(intrinsic_dim, length);
  SoftminOptions opt;
  opt.beta = beta;
  opt.enforce_epsilon = false;
  const auto model = build_softmin_model(task, 1.0, opt);
  auto rng = CounterRng(seed).split("verify-softmin");
  std::vector<Sequence> seqs;
  seqs.reserve(samples);
  for (std::size_t s = 0; s < samples; ++s) seqs.emplace_back(rng.uniform_matrix(length, intrinsic_dim, 0.0, 1.0));
  const auto rep = verify_softmin_bound(model, seqs);
  VerifyReport r;
  r.construction = "softmin";
  r.parameters = {{"D", static_cast<double>(intrinsic_dim)}, {"T", static_cast<double>(length)}, {"beta", beta}};
  r.bound = *std::max_element(rep.bounds.begin(), rep.bounds.end());
  r.max_observed = rep.max_observed;
  r.samples = samples;
  r.violations = rep.lower_violations + rep.upper_violations;
  for (const auto& w : rep.witnesses) add_witness(r, w.tokens);
  return r;
}

VerifyReport verify_memorization(Eigen::Index length, double epsilon, std::size_t samples, std::uint64_t seed) {
  const auto task = make_coordinate_min_task(1, length);
  const auto model = build_memorization_model(task, epsilon);
  VerifyReport r;
  r.construction = "memorization";
  r.parameters = {{"T", static_cast<double>(length)}, {"eps", epsilon}, {"n", static_cast<double>(model.embed)}};
  r.bound = model.achieved_bound;
  auto rng = CounterRng(seed).split("verify-memorization");
  for (std::size_t s = 0; s < samples; ++s) {
    const Sequence x(rng.uniform_matrix(length, 1, 0.0, 1.0));
    const double err = std::abs(model(x) - x.tokens.minCoeff());
    r.max_observed = std::max(r.max_observed, err);
    ++r.samples;
    if (err > r.bound) {
      ++r.violations;
      add_witness(r, x.tokens);
    }
  }
  return r;
}

VerifyReport verify_stacking(std::size_t samples, std::uint64_t seed) {
  auto rng = CounterRng(seed).split("verify-stacking");
  auto layer = [&](Eigen::Index out, Eigen::Index in, bool relu) {
    return DenseLayer{rng.uniform_matrix(out, in, -1.0, 1.0), Vector(rng.uniform_matrix(out, 1, -1.0, 1.0)), relu};
  };
  DenseNet f1, f2, f3;
  f1.layers = {layer(7, 3, true), layer(4, 7, false)};
  f2.layers = {layer(9, 4, true), layer(6, 9, true), layer(2, 6, false)};
  f3.layers = {layer(5, 2, true), layer(1, 5, false)};
  const auto stacked = stack_networks(f1, f2, f3);
  VerifyReport r;
  r.construction = "stacking";
  r.parameters = {{"depth", static_cast<double>(stacked.depth())}};
  r.bound = 1e-12;
  for (std::size_t s = 0; s < samples; ++s) {
    const Vector x = rng.uniform_matrix(3, 1, -1.0, 1.0);
    const double a = stacked(x)(0), b = f3(f2(f1(x)))(0);
    const double rel = std::abs(a - b) / std::max(std::abs(b), 1e-300);
    const double err = std::abs(a - b) <= 1e-15 ? 0.0 : rel;
    r.max_observed = std::max(r.max_observed, err);
    ++r.samples;
    if (err > r.bound) {
      ++r.violations;
      add_witness(r, x);
    }
  }
  return r;
}

VerifyReport verify_selector(Eigen::Index length, Eigen::Index dim, std::size_t samples, std::uint64_t seed) {
  VerifyReport r;
  r.construction = "selector";
  r.parameters = {{"T", static_cast<double>(length)}, {"d", static_cast<double>(dim)}};
  const double ladder[] = {1e1, 1e2, 1e3, 1e4};
  auto rng = CounterRng(seed).split("verify-selector");
  for (std::size_t s = 0; s < samples; ++s) {
    const Sequence x(rng.uniform_matrix(length, dim, 0.0, 1.0));
    double prev = std::numeric_limits<double>::infinity();
    bool bad = false;
    for (double q : ladder) {
      const double err = (smooth_selector(x, q) - x.tokens).cwiseAbs().maxCoeff();
      if (err > prev + kRoundoff) bad = true;
      prev = err;
    }
    r.max_observed = std::max(r.max_observed, prev);
    ++r.samples;
    if (bad) {
      ++r.violations;
      add_witness(r, x.tokens);
    }
  }
  r.bound = r.max_observed;
  return r;
}

std::string verify_report_json(const VerifyReport& r) {
  nlohmann::json j;
  j["construction"] = r.construction;
  j["parameters"] = r.parameters;
  j["bound"] = r.bound;
  j["max_observed"] = r.max_observed;
  j["samples"] = r.samples;
  j["violations"] = r.violations;
  j["ok"] = r.ok();
  j["witnesses"] = r.witnesses;
  return j.dump(2);
}

}  // namespace headlab
