#include "headlab/training.hpp"

#include <chrono>
#include <map>
#include <cmath>
#include <numbers>
#include <numeric>

#include "headlab/analysis.hpp"
#include "headlab/errors.hpp"
#include "headlab/numerics/adam.hpp"

namespace headlab {

std::string to_string(RunStatus s) { return s == RunStatus::Ok ? "ok" : "diverged"; }

RunStatus run_status_from_string(const std::string& s) {
  if (s == "ok") return RunStatus::Ok;
  if (s == "diverged") return RunStatus::Diverged;
  throw InvalidInput("unknown run status '" + s + "'");
}

double evaluate_nmse(const TransformerParams& params, const std::vector<Record>& records) {
  constexpr std::size_t kChunk = 512;
  Vector preds(static_cast<Eigen::Index>(records.size()));
  Vector targets(preds.size());
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < records.size(); start += kChunk) {
    const auto stop = std::min(records.size(), start + kChunk);
    idx.resize(stop - start);
    std::iota(idx.begin(), idx.end(), start);
    const auto tokens = stack_tokens(records, idx);
    preds.segment(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(idx.size())) =
        forward_batch(params, tokens, static_cast<Eigen::Index>(idx.size()));
  }
  for (std::size_t i = 0; i < records.size(); ++i) targets(static_cast<Eigen::Index>(i)) = records[i].label;
  return nmse(preds, targets);
}

TrainResult train(const ModelConfig& config, const Dataset& data, std::uint64_t seed, const TrainOptions& options) {
  config.validate();
  if (data.train.empty() || data.val.empty()) throw InvalidInput("train: dataset must have train and val records");
  if (options.batch_size == 0) throw InvalidInput("train: batch size must be positive");
  const auto started = std::chrono::steady_clock::now();

  const CounterRng root = CounterRng(seed).split("train");
  TrainResult result{{}, init_params(config, root.split("init"))};
  auto& params = result.params;
  auto& rec = result.record;
  rec.heads = config.heads;
  rec.length = config.length;
  rec.hidden = config.hidden;
  rec.seed = seed;
  rec.parameter_count = parameter_count(config).mlp();
  rec.epochs = options.epochs;
  rec.batch_size = options.batch_size;
  rec.learning_rate = options.learning_rate;

  const auto n = data.train.size();
  Vector labels(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) labels(static_cast<Eigen::Index>(i)) = data.train[i].label;
  const double mean = labels.mean();
  double scale = std::sqrt((labels.array() - mean).square().mean());
  if (!(scale > 0.0)) scale = 1.0;

  auto tensors = params.tensors();
  std::vector<const Matrix*> const_tensors(tensors.begin(), tensors.end());
  AdamState adam({options.learning_rate}, const_tensors);
  const std::size_t steps_per_epoch = (n + options.batch_size - 1) / options.batch_size;
  const double total_steps = static_cast<double>(std::max<std::size_t>(1, options.epochs * steps_per_epoch));

  std::vector<std::size_t> order(n);
  std::vector<const Matrix*> grads(tensors.size());
  std::map<std::size_t, LossGraph> graphs;  // one recorded graph per batch size
  for (std::size_t epoch = 0; epoch < options.epochs && rec.status == RunStatus::Ok; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto shuffle_rng = root.split({0x73687566ULL, static_cast<std::uint64_t>(epoch)});
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[shuffle_rng.below(i)]);

    for (std::size_t start = 0; start < n; start += options.batch_size) {
      const auto stop = std::min(n, start + options.batch_size);
      const std::span<const std::size_t> batch(order.data() + start, stop - start);
      Vector targets(static_cast<Eigen::Index>(batch.size()));
      for (std::size_t b = 0; b < batch.size(); ++b)
        targets(static_cast<Eigen::Index>(b)) = (data.train[batch[b]].label - mean) / scale;

      auto tokens = stack_tokens(data.train, batch);
      auto it = graphs.find(batch.size());
      if (it == graphs.end())
        it = graphs.emplace(batch.size(), build_loss_graph(params, tokens, targets)).first;
      else
        it->second.load(params, tokens, targets);
      auto& graph = it->second;
      graph.tape.forward();
      const double loss = graph.tape.value(graph.loss)(0, 0);
      if (!std::isfinite(loss) || loss > options.divergence_threshold) {
        rec.status = RunStatus::Diverged;
        break;
      }
      graph.tape.backward(graph.loss);
      for (std::size_t k = 0; k < tensors.size(); ++k) grads[k] = &graph.tape.grad(graph.params[k]);
      if (options.cosine_decay) {
        const double progress = static_cast<double>(adam.step) / total_steps;
        const double floor = options.final_lr_fraction;
        adam.options.learning_rate =
            options.learning_rate * (floor + (1.0 - floor) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress)));
      }
      adam_step(adam, tensors, grads);
    }
    if (rec.status == RunStatus::Ok) rec.epochs_completed = epoch + 1;
  }

  // Fold the label standardization into the output layer.
  params.ffn_w2 *= scale;
  params.ffn_b2 = params.ffn_b2 * scale;
  params.ffn_b2(0, 0) += mean;

  if (rec.status == RunStatus::Ok) {
    bool finite = true;
    for (const Matrix* m : params.tensors()) finite = finite && m->allFinite();
    if (finite) {
      rec.train_nmse = evaluate_nmse(params, data.train);
      rec.val_nmse = evaluate_nmse(params, data.val);
    }
    if (!finite || !std::isfinite(rec.train_nmse) || !std::isfinite(rec.val_nmse)) rec.status = RunStatus::Diverged;
  }
  if (rec.status == RunStatus::Diverged) {
    rec.train_nmse = std::numeric_limits<double>::quiet_NaN();
    rec.val_nmse = std::numeric_limits<double>::quiet_NaN();
  }
  rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return result;
}

}  // namespace headlab
