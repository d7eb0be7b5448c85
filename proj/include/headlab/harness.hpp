#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "headlab/training.hpp"

namespace headlab {

/// Flat `key = value` configuration. Lines starting with '#' are comments;
/// lists are comma separated.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::istream& in);
  static KeyValueConfig load(const std::filesystem::path& path);

  /// `key=value`; throws InvalidInput on a malformed override.
  void apply_override(const std::string& assignment);
  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  bool contains(const std::string& key) const { return values_.contains(key); }
  const std::string& get(const std::string& key) const;
  std::string get_or(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key) const;
  std::int64_t get_int(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<std::int64_t> get_int_list(const std::string& key) const;

  /// Sorted `key = value` lines.
  std::string canonical() const;
  /// FNV-1a of canonical(), as 16 hex digits.
  std::string hash() const;
  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

struct GridSpec {
  std::string experiment = "desk";
  std::vector<Eigen::Index> heads{1, 2, 3, 4, 5};
  std::vector<Eigen::Index> lengths{8, 32, 128};
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::vector<Eigen::Index> hidden{32};
  Eigen::Index head_dim = 8;
  double beta = 1.0;
  std::size_t n_train = 4000;
  std::size_t n_val = 1000;
  /// Seeds the task projections and the samples; shared by every cell.
  std::uint64_t data_seed = 0;
  TrainOptions train;

  /// Throws InvalidInput on empty lists or non-positive sizes.
  void validate() const;
  std::size_t cells() const { return heads.size() * lengths.size() * seeds.size() * hidden.size(); }
};

/// Throws InvalidInput on unknown keys or unparsable values.
GridSpec grid_spec_from_config(const KeyValueConfig& config);

/// (h, T, N, seed)
using CellKey = std::tuple<Eigen::Index, Eigen::Index, Eigen::Index, std::uint64_t>;
CellKey cell_key(const RunRecord& r);

std::string run_record_to_json(const RunRecord& r);
RunRecord run_record_from_json(const std::string& line);

/// Read a JSON-lines results file; a missing file yields no records. A
/// truncated final line (interrupted write) is skipped.
std::vector<RunRecord> read_results(const std::filesystem::path& path);

struct GridOptions {
  std::size_t threads = 1;
  /// Called after each finished cell, from the writer's critical section.
  std::function<void(const RunRecord&, std::size_t done, std::size_t total)> progress;
};

/// Train every cell of `spec` not already present in `results_path`,
/// appending one line per finished cell through a single writer. Returns
/// the records computed by this call.
std::vector<RunRecord> run_grid(const GridSpec& spec, const std::filesystem::path& results_path,
                                const GridOptions& options = {});

/// The dataset shared by every cell of length T.
Dataset grid_dataset(const GridSpec& spec, Eigen::Index length);

struct SeedSummary {
  double min_nmse = 0.0;   // NaN when no run is ok
  double mean_nmse = 0.0;  // over ok runs
  double std_nmse = 0.0;   // sample standard deviation; NaN with fewer than 2 ok runs
  std::size_t ok_runs = 0;
  std::size_t runs = 0;
  bool flagged() const { return ok_runs == 0; }
};

/// (h, T, N)
using SummaryKey = std::tuple<Eigen::Index, Eigen::Index, Eigen::Index>;

/// Minimal validation NMSE over ok seeds per (h, T, N), with mean and std.
/// Throws InvalidInput on an empty input.
std::map<SummaryKey, SeedSummary> min_over_seeds(const std::vector<RunRecord>& records);

/// h,T,N,min_nmse,mean_nmse,std_nmse
void write_summary_csv(const std::map<SummaryKey, SeedSummary>& summary, std::ostream& out);

/// Version string baked in at build time.
std::string version_string();

/// {command, version, config_hash, config, overrides, seeds, outputs}
void write_manifest(const std::filesystem::path& path, const std::string& command, const KeyValueConfig& config,
                    const std::vector<std::string>& overrides, const std::vector<std::string>& outputs);

}  // namespace headlab
