#pragma once

#include <cstdint>
#include <functional>
#include <optional>

#include "headlab/tasks.hpp"

namespace headlab {

/// Any map from a sequence to the vector the feed-forward block sees.
using PostAttentionMap = std::function<Vector(const Sequence&)>;

struct CollisionOptions {
  /// Number of post-attention evaluations.
  std::size_t budget = 100000;
  /// Positions that may differ between the pair; 0 means ceil(T/4).
  Eigen::Index window = 0;
  /// Values per coordinate in the probe grid {0, 1/(g-1), ..., 1}.
  Eigen::Index grid = 11;
  /// Pairs with a smaller target gap are not reported.
  double min_gap = 0.0;
  std::uint64_t seed = 0;
  /// Head count of the probed model; must be below D unless the check is off.
  Eigen::Index heads = 1;
  bool require_head_deficit = true;
};

struct CollisionResult {
  bool found = false;
  Sequence first, second;
  double distance = 0.0;  // ||post(first) - post(second)||_2
  double gap = 0.0;       // |H(first) - H(second)|
  double ratio = 0.0;     // gap / distance, +inf at distance 0
  /// ffn_width_lower_bound(distance, gap, n); empty when distance is 0.
  std::optional<std::uint64_t> implied_width;
  std::size_t evaluations = 0;
};

/// Random restarts plus coordinate descent over the probe grid, maximising
/// (gap / distance, gap) lexicographically over pairs that agree outside the
/// window. Tokens are drawn from [0,1]^d. Evidence only, not a certificate.
/// Throws InvalidInput for a zero budget, a bad window or grid, or h >= D
/// while require_head_deficit is set.
CollisionResult find_attention_collision(const PostAttentionMap& post, const RetrievalTask& task,
                                         const CollisionOptions& options = {});

}  // namespace headlab
