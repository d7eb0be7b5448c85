#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "headlab/analysis.hpp"
#include "headlab/harness.hpp"

namespace headlab {

/// err keyed by (h, T, N); N is 0 when the source does not record it.
using ErrGrid = std::map<SummaryKey, double>;

/// min_nmse of every unflagged key.
ErrGrid err_grid_from_summary(const std::map<SummaryKey, SeedSummary>& summary);

/// CSV with a header naming h and T, an optional N, and one value column
/// chosen from min_nmse, err or nmse (first present wins).
ErrGrid read_err_grid_csv(std::istream& in);

/// The (h, T) table of one hidden width.
ErrTable err_table(const ErrGrid& grid, Eigen::Index hidden);

/// Writes report.json, nmse_vs_h.csv, log_n_vs_log_nmse.csv and
/// reversal_vs_h.csv into `out_dir`; returns the report JSON text.
std::string write_analysis(const ErrGrid& grid, const std::vector<Eigen::Index>& drop,
                           const std::filesystem::path& out_dir, const TransitionOptions& options = {});

}  // namespace headlab
