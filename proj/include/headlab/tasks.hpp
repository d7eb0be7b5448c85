#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "headlab/numerics/types.hpp"

namespace headlab {

/// A length-T sequence of d-dimensional tokens, stored as a T x d matrix.
struct Sequence {
  Matrix tokens;

  Sequence() = default;
  explicit Sequence(Matrix t) : tokens(std::move(t)) {}
  Eigen::Index length() const { return tokens.rows(); }
  Eigen::Index dim() const { return tokens.cols(); }
};

/// f(x) = w.x + b. Kept alongside the callable so constructions can build
/// exact ReLU representations.
struct AffineMap {
  Vector weights;
  double bias = 0.0;
  double operator()(const Eigen::Ref<const RowVector>& x) const { return x.dot(weights.transpose()) + bias; }
};

enum class Extremum { Min, Max };

/// One retrieved feature: z_i = min_{t in S_i} f_i(x(t)) (or max).
struct Component {
  std::function<double(const Eigen::Ref<const RowVector>&)> fn;
  std::optional<AffineMap> affine;
  std::vector<Eigen::Index> index_set;  // 0-based positions, sorted
  Extremum mode = Extremum::Min;
};

enum class TokenDomain { UnitCube, Gaussian };

/// Generalized D-retrieval target H(X) = F0(z_1, ..., z_D).
struct RetrievalTask {
  std::string name;
  Eigen::Index length = 0;  // T
  Eigen::Index dim = 0;     // d
  std::vector<Component> components;
  std::function<double(const Vector&)> outer;
  std::optional<AffineMap> outer_affine;
  /// sup ||grad F0||_1 over [0,1]^D.
  double outer_lipschitz = 1.0;
  TokenDomain domain = TokenDomain::UnitCube;
  /// Projection vectors a_i (one per row) for the synthetic task; empty otherwise.
  Matrix projections;

  Eigen::Index intrinsic_dimension() const { return static_cast<Eigen::Index>(components.size()); }

  /// Throws InvalidInput unless D >= 1, every S_i is a valid set of
  /// positions with |S_i| >= ceil(T/4), and the callables are set.
  void validate() const;
};

/// All positions 0..T-1.
std::vector<Eigen::Index> all_positions(Eigen::Index length);

/// The retrieved feature vector (z_1, ..., z_D).
Vector retrieved_features(const RetrievalTask& task, const Sequence& x);

/// F0 applied to the retrieved features. Throws InvalidInput on shape mismatch.
double evaluate_target(const RetrievalTask& task, const Sequence& x);

/// y = sum_{i=1}^4 max_t a_i . x(t) with unit-norm a_i drawn from `seed`.
/// The a_i depend on the seed only, not on T.
RetrievalTask make_synthetic_task(std::uint64_t seed, Eigen::Index length);

/// Same target family with caller-supplied projections (one per row).
RetrievalTask make_projection_max_task(const Matrix& projections, Eigen::Index length);

/// H(X) = max_t x(t) + min_t x(t) on scalar tokens in [0,1].
RetrievalTask make_toy_task(Eigen::Index length);

/// H(X) = sum_i min_t x_i(t) on d-dimensional tokens in [0,1]^d (D = d).
RetrievalTask make_coordinate_min_task(Eigen::Index dim, Eigen::Index length);

struct Record {
  Sequence x;
  double label = 0.0;
};

struct DatasetMeta {
  std::uint64_t seed = 0;
  Eigen::Index length = 0;
  Eigen::Index dim = 0;
  std::string task;
  Matrix projections;
};

struct Dataset {
  std::vector<Record> train;
  std::vector<Record> val;
  DatasetMeta meta;
};

/// Draw i.i.d. tokens from the task's domain and label them with
/// evaluate_target. Deterministic in (task, sizes, seed).
Dataset sample_dataset(const RetrievalTask& task, std::size_t n_train, std::size_t n_val, std::uint64_t seed);

/// JSON-lines: a {"meta": ...} header, then one {"split", "tokens", "label"}
/// object per record. Doubles are written in shortest round-trip form.
void write_dataset_jsonl(const Dataset& data, std::ostream& out);
Dataset read_dataset_jsonl(std::istream& in);

}  // namespace headlab
