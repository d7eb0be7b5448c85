#include "headlab/constructions/collision.hpp"

#include <cmath>
#include <limits>

#include "headlab/constructions/bounds.hpp"
#include "headlab/errors.hpp"
#include "headlab/numerics/rng.hpp"

namespace headlab {

namespace {

struct Score {
  bool valid = false;
  double ratio = -1.0;
  double gap = -1.0;

  bool operator>(const Score& o) const {
    if (valid != o.valid) return valid;
    if (ratio != o.ratio) return ratio > o.ratio;
    return gap > o.gap;
  }
};

struct Side {
  Sequence x;
  Vector post;
  double target = 0.0;
};

}  // namespace

CollisionResult find_attention_collision(const PostAttentionMap& post, const RetrievalTask& task,
                                         const CollisionOptions& options) {
  task.validate();
  if (options.budget == 0) throw InvalidInput("find_attention_collision: budget must be positive");
  if (options.grid < 2) throw InvalidInput("find_attention_collision: grid needs at least 2 values");
  if (options.require_head_deficit && options.heads >= task.intrinsic_dimension())
    throw InvalidInput("find_attention_collision: needs h < D, got h = " + std::to_string(options.heads) +
                       ", D = " + std::to_string(task.intrinsic_dimension()));
  const Eigen::Index T = task.length, d = task.dim;
  const Eigen::Index window = options.window == 0 ? (T + 3) / 4 : options.window;
  if (window < 1 || window > T) throw InvalidInput("find_attention_collision: window out of range");
  const double step = 1.0 / static_cast<double>(options.grid - 1);
  const double min_gap = std::max(options.min_gap, std::numeric_limits<double>::min());

  CollisionResult best;
  Score best_score;
  std::size_t evals = 0;
  auto refresh = [&](Side& s) {
    s.post = post(s.x);
    s.target = evaluate_target(task, s.x);
    ++evals;
  };
  auto score = [&](const Side& a, const Side& b) {
    Score sc;
    sc.gap = std::abs(a.target - b.target);
    const double dist = (a.post - b.post).norm();
    sc.ratio = dist == 0.0 ? (sc.gap > 0.0 ? std::numeric_limits<double>::infinity() : 0.0) : sc.gap / dist;
    sc.valid = sc.gap >= min_gap;
    return sc;
  };
  auto record = [&](const Side& a, const Side& b, const Score& sc) {
    if (!sc.valid || !(sc > best_score)) return;
    best_score = sc;
    best.found = true;
    best.first = a.x;
    best.second = b.x;
    best.distance = (a.post - b.post).norm();
    best.gap = sc.gap;
    best.ratio = sc.ratio;
  };

  const CounterRng root = CounterRng(options.seed).split("collision");
  for (std::uint64_t restart = 0; evals + 2 <= options.budget; ++restart) {
    auto rng = root.split(restart);
    Side a{Sequence(rng.uniform_matrix(T, d, 0.0, 1.0)), {}, 0.0};
    Side b = a;
    for (Eigen::Index t = 0; t < window; ++t)
      for (Eigen::Index j = 0; j < d; ++j) {
        a.x.tokens(t, j) = static_cast<double>(rng.below(static_cast<std::uint64_t>(options.grid))) * step;
        b.x.tokens(t, j) = static_cast<double>(rng.below(static_cast<std::uint64_t>(options.grid))) * step;
      }
    refresh(a);
    refresh(b);
    Score current = score(a, b);
    record(a, b, current);

    bool improved = true;
    while (improved && evals < options.budget) {
      improved = false;
      for (int which = 0; which < 2 && evals < options.budget; ++which) {
        Side& s = which == 0 ? a : b;
        const Side& other = which == 0 ? b : a;
        for (Eigen::Index t = 0; t < window && evals < options.budget; ++t)
          for (Eigen::Index j = 0; j < d && evals < options.budget; ++j) {
            const double keep = s.x.tokens(t, j);
            double best_value = keep;
            Side trial = s;
            for (Eigen::Index g = 0; g < options.grid && evals < options.budget; ++g) {
              const double value = static_cast<double>(g) * step;
              if (value == keep) continue;
              trial.x.tokens(t, j) = value;
              refresh(trial);
              const Score sc = which == 0 ? score(trial, other) : score(other, trial);
              if (sc > current) {
                current = sc;
                best_value = value;
                improved = true;
              }
            }
            if (best_value != keep) {
              s.x.tokens(t, j) = best_value;
              refresh(s);
              record(a, b, current);
            }
          }
      }
    }
  }
  best.evaluations = evals;
  if (best.found && best.distance > 0.0)
    best.implied_width = ffn_width_lower_bound(best.distance, best.gap, static_cast<std::uint64_t>(
                                                                           post(best.first).size()));
  return best;
}

}  // namespace headlab
