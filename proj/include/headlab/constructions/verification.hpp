#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "headlab/numerics/types.hpp"

namespace headlab {

/// Outcome of a randomized check of one construction.
struct VerifyReport {
  std::string construction;
  std::map<std::string, double> parameters;
  double bound = 0.0;         // the tolerance the construction promises
  double max_observed = 0.0;  // worst observed error
  std::size_t samples = 0;
  std::size_t violations = 0;
  std::vector<std::vector<double>> witnesses;  // inputs of the first violations

  bool ok() const { return violations == 0; }
};

/// |f^ - max| <= 1/n and f^ >= max on `samples` uniform points plus every
/// corner of [0,1]^T when T <= 16.
VerifyReport verify_relu_max(Eigen::Index length, double epsilon, std::size_t samples, std::uint64_t seed);

/// Exact-affine softmin model for F0 = sum of the D coordinates of d = D
/// tokens with S_i = [T]; checks the softmin sandwich on every head.
VerifyReport verify_softmin(Eigen::Index intrinsic_dim, Eigen::Index length, double beta, std::size_t samples,
                            std::uint64_t seed);

/// Memorization model of min_t x(t) on scalar tokens; checks
/// |output - min| <= achieved bound.
VerifyReport verify_memorization(Eigen::Index length, double epsilon, std::size_t samples, std::uint64_t seed);

/// Random 2-, 3- and 2-layer nets stacked into one; checks relative
/// deviation from sequential evaluation <= 1e-12.
VerifyReport verify_stacking(std::size_t samples, std::uint64_t seed);

/// Smooth selector error on a q ladder {10, 1e2, 1e3, 1e4}; a violation is
/// an increase along the ladder. max_observed is the error at the top q.
VerifyReport verify_selector(Eigen::Index length, Eigen::Index dim, std::size_t samples, std::uint64_t seed);

std::string verify_report_json(const VerifyReport& report);

}  // namespace headlab
