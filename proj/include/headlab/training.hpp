#pragma once

#include <cstdint>
#include <string>

#include "headlab/model.hpp"
#include "headlab/tasks.hpp"

namespace headlab {

struct TrainOptions {
  std::size_t epochs = 200;
  std::size_t batch_size = 128;
  double learning_rate = 1e-3;
  /// Cosine decay of the learning rate to `final_lr_fraction * learning_rate`.
  bool cosine_decay = false;
  double final_lr_fraction = 0.0;
  /// A loss above this (or non-finite) marks the run diverged.
  double divergence_threshold = 1e6;
};

enum class RunStatus { Ok, Diverged };

/// One training outcome, self-describing enough to be read back alone.
struct RunRecord {
  std::string experiment;
  Eigen::Index heads = 0;
  Eigen::Index length = 0;
  Eigen::Index hidden = 0;
  std::uint64_t seed = 0;
  std::size_t parameter_count = 0;
  double train_nmse = 0.0;
  double val_nmse = 0.0;
  std::size_t epochs_completed = 0;
  std::size_t epochs = 0;
  std::size_t batch_size = 0;
  double learning_rate = 0.0;
  double wall_seconds = 0.0;
  RunStatus status = RunStatus::Ok;
};

struct TrainResult {
  RunRecord record;
  TransformerParams params;
};

/// Minimize the MSE with Adam on standardized labels; the standardization is
/// folded back into the output layer before returning, so `params` predicts
/// raw labels. Deterministic in (config, data, seed, options).
TrainResult train(const ModelConfig& config, const Dataset& data, std::uint64_t seed, const TrainOptions& options);

/// NMSE of `params` on a list of records.
double evaluate_nmse(const TransformerParams& params, const std::vector<Record>& records);

std::string to_string(RunStatus s);
RunStatus run_status_from_string(const std::string& s);

}  // namespace headlab
