#include "headlab/tasks.hpp"

#include <algorithm>
#include <istream>
#include <limits>
#include <json.hpp>
#include <ostream>
#include <string>

#include "headlab/errors.hpp"
#include "headlab/numerics/rng.hpp"

namespace headlab {

using nlohmann::json;

void RetrievalTask::validate() const {
  if (components.empty()) throw InvalidInput("task: intrinsic dimension must be >= 1");
  if (length <= 0 || dim <= 0) throw InvalidInput("task: T and d must be positive");
  if (!outer) throw InvalidInput("task: missing outer function");
  const auto min_size = static_cast<std::size_t>((length + 3) / 4);
  for (std::size_t i = 0; i < components.size(); ++i) {
    const auto& c = components[i];
    if (!c.fn) throw InvalidInput("task: component " + std::to_string(i) + " has no function");
    if (c.index_set.size() < min_size)
      throw InvalidInput("task: |S_" + std::to_string(i + 1) + "| = " + std::to_string(c.index_set.size()) +
                         " < ceil(T/4) = " + std::to_string(min_size));
    for (std::size_t k = 0; k < c.index_set.size(); ++k) {
      const auto s = c.index_set[k];
      if (s < 0 || s >= length) throw InvalidInput("task: index set position out of range");
      if (k > 0 && c.index_set[k - 1] >= s) throw InvalidInput("task: index set must be sorted and unique");
    }
    if (c.affine && c.affine->weights.size() != dim) throw InvalidInput("task: affine component has wrong dimension");
  }
  if (outer_affine && outer_affine->weights.size() != intrinsic_dimension())
    throw InvalidInput("task: affine outer function has wrong dimension");
}

std::vector<Eigen::Index> all_positions(Eigen::Index length) {
  std::vector<Eigen::Index> s(static_cast<std::size_t>(length));
  for (Eigen::Index t = 0; t < length; ++t) s[static_cast<std::size_t>(t)] = t;
  return s;
}

Vector retrieved_features(const RetrievalTask& task, const Sequence& x) {
  if (x.length() != task.length || x.dim() != task.dim)
    throw InvalidInput("evaluate_target: sequence is " + std::to_string(x.length()) + "x" + std::to_string(x.dim()) +
                       ", task expects " + std::to_string(task.length) + "x" + std::to_string(task.dim));
  Vector z(task.intrinsic_dimension());
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    const auto& c = task.components[static_cast<std::size_t>(i)];
    const double sign = c.mode == Extremum::Min ? 1.0 : -1.0;
    // max_t f = -min_t(-f)
    double best = std::numeric_limits<double>::infinity();
    for (auto t : c.index_set) best = std::min(best, sign * c.fn(x.tokens.row(t)));
    z(i) = sign * best;
  }
  return z;
}

double evaluate_target(const RetrievalTask& task, const Sequence& x) {
  return task.outer(retrieved_features(task, x));
}

RetrievalTask make_projection_max_task(const Matrix& projections, Eigen::Index length) {
  RetrievalTask task;
  task.name = "projection-max";
  task.length = length;
  task.dim = projections.cols();
  task.domain = TokenDomain::Gaussian;
  task.projections = projections;
  for (Eigen::Index i = 0; i < projections.rows(); ++i) {
    AffineMap a{projections.row(i).transpose(), 0.0};
    Component c;
    c.fn = a;
    c.affine = a;
    c.index_set = all_positions(length);
    c.mode = Extremum::Max;
    task.components.push_back(std::move(c));
  }
  const auto D = projections.rows();
  task.outer = [](const Vector& z) { return z.sum(); };
  task.outer_affine = AffineMap{Vector::Ones(D), 0.0};
  task.outer_lipschitz = static_cast<double>(D);
  task.validate();
  return task;
}

RetrievalTask make_synthetic_task(std::uint64_t seed, Eigen::Index length) {
  constexpr Eigen::Index kFeatures = 4;
  auto rng = CounterRng(seed).split("synthetic-projections");
  Matrix a = rng.normal_matrix(kFeatures, kFeatures);
  for (Eigen::Index i = 0; i < kFeatures; ++i) a.row(i).normalize();
  auto task = make_projection_max_task(a, length);
  task.name = "synthetic-max4";
  return task;
}

RetrievalTask make_toy_task(Eigen::Index length) {
  RetrievalTask task;
  task.name = "toy-max-plus-min";
  task.length = length;
  task.dim = 1;
  task.domain = TokenDomain::UnitCube;
  AffineMap id{Vector::Ones(1), 0.0};
  for (auto mode : {Extremum::Max, Extremum::Min}) {
    Component c;
    c.fn = id;
    c.affine = id;
    c.index_set = all_positions(length);
    c.mode = mode;
    task.components.push_back(std::move(c));
  }
  task.outer = [](const Vector& z) { return z.sum(); };
  task.outer_affine = AffineMap{Vector::Ones(2), 0.0};
  task.outer_lipschitz = 2.0;
  task.validate();
  return task;
}

RetrievalTask make_coordinate_min_task(Eigen::Index dim, Eigen::Index length) {
  if (dim < 1) throw InvalidInput("coordinate-min task: dim must be >= 1");
  RetrievalTask task;
  task.name = "coordinate-min";
  task.length = length;
  task.dim = dim;
  for (Eigen::Index i = 0; i < dim; ++i) {
    Component c;
    AffineMap f{Vector::Unit(dim, i), 0.0};
    c.fn = f;
    c.affine = f;
    c.index_set = all_positions(length);
    task.components.push_back(std::move(c));
  }
  task.outer = [](const Vector& z) { return z.sum(); };
  task.outer_affine = AffineMap{Vector::Ones(dim), 0.0};
  task.outer_lipschitz = static_cast<double>(dim);
  task.validate();
  return task;
}

namespace {

Sequence draw_sequence(const RetrievalTask& task, CounterRng& rng) {
  if (task.domain == TokenDomain::Gaussian) return Sequence(rng.normal_matrix(task.length, task.dim));
  return Sequence(rng.uniform_matrix(task.length, task.dim, 0.0, 1.0));
}

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const json& j) {
  if (!j.is_array()) throw InvalidInput("dataset: expected an array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = rows == 0 ? 0 : static_cast<Eigen::Index>(j[0].size());
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto& row = j[static_cast<std::size_t>(r)];
    if (static_cast<Eigen::Index>(row.size()) != cols) throw InvalidInput("dataset: ragged token matrix");
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

}  // namespace

Dataset sample_dataset(const RetrievalTask& task, std::size_t n_train, std::size_t n_val, std::uint64_t seed) {
  if (n_train == 0 || n_val == 0) throw InvalidInput("sample_dataset: n_train and n_val must be positive");
  task.validate();
  Dataset data;
  data.meta = {seed, task.length, task.dim, task.name, task.projections};
  const auto root = CounterRng(seed).split({static_cast<std::uint64_t>(task.length), 0x64617461ULL});
  auto fill = [&](std::vector<Record>& out, std::size_t n, std::uint64_t split_tag) {
    auto rng = root.split(split_tag);
    out.reserve(n);
    for (std::size_t k = 0; k < n; ++k) {
      Record r{draw_sequence(task, rng), 0.0};
      r.label = evaluate_target(task, r.x);
      out.push_back(std::move(r));
    }
  };
  fill(data.train, n_train, 1);
  fill(data.val, n_val, 2);
  return data;
}

void write_dataset_jsonl(const Dataset& data, std::ostream& out) {
  json meta = {{"seed", data.meta.seed},
               {"T", data.meta.length},
               {"d", data.meta.dim},
               {"task", data.meta.task},
               {"projections", matrix_to_json(data.meta.projections)}};
  out << json{{"meta", meta}}.dump() << '\n';
  auto emit = [&](const std::vector<Record>& recs, const char* split) {
    for (const auto& r : recs)
      out << json{{"split", split}, {"tokens", matrix_to_json(r.x.tokens)}, {"label", r.label}}.dump() << '\n';
  };
  emit(data.train, "train");
  emit(data.val, "val");
}

Dataset read_dataset_jsonl(std::istream& in) {
  Dataset data;
  std::string line;
  if (!std::getline(in, line)) throw InvalidInput("dataset: empty stream");
  const auto header = json::parse(line);
  if (!header.contains("meta")) throw InvalidInput("dataset: first line must be the metadata header");
  const auto& m = header["meta"];
  data.meta.seed = m.at("seed").get<std::uint64_t>();
  data.meta.length = m.at("T").get<Eigen::Index>();
  data.meta.dim = m.at("d").get<Eigen::Index>();
  data.meta.task = m.at("task").get<std::string>();
  data.meta.projections = matrix_from_json(m.at("projections"));
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = json::parse(line);
    Record r{Sequence(matrix_from_json(j.at("tokens"))), j.at("label").get<double>()};
    const auto split = j.value("split", std::string("train"));
    if (split == "train")
      data.train.push_back(std::move(r));
    else if (split == "val")
      data.val.push_back(std::move(r));
    else
      throw InvalidInput("dataset: unknown split '" + split + "'");
  }
  return data;
}

}  // namespace headlab
