#include <doctest.h>

#include <algorithm>
#include <sstream>

#include "headlab/errors.hpp"
#include "headlab/tasks.hpp"

using namespace headlab;

TEST_CASE("synthetic task: unit projections, fixed across T") {
  const auto a = make_synthetic_task(3, 8);
  const auto b = make_synthetic_task(3, 128);
  CHECK(a.intrinsic_dimension() == 4);
  CHECK(a.dim == 4);
  CHECK(a.projections == b.projections);
  for (Eigen::Index i = 0; i < 4; ++i) CHECK(a.projections.row(i).norm() == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(make_synthetic_task(4, 8).projections != a.projections);
}

TEST_CASE("synthetic label equals the brute-force sum of maxima") {
  const auto task = make_synthetic_task(1, 16);
  const auto data = sample_dataset(task, 50, 10, 9);
  for (const auto& r : data.train) {
    double expected = 0;
    for (Eigen::Index i = 0; i < 4; ++i) {
      double best = -1e300;
      for (Eigen::Index t = 0; t < 16; ++t) {
        double dot = 0;
        for (Eigen::Index k = 0; k < 4; ++k) dot += task.projections(i, k) * r.x.tokens(t, k);
        best = std::max(best, dot);
      }
      expected += best;
    }
    CHECK(r.label == doctest::Approx(expected).epsilon(1e-13));
  }
}

TEST_CASE("toy task is max plus min") {
  const auto task = make_toy_task(5);
  Matrix x(5, 1);
  x << 0.3, 0.9, 0.1, 0.5, 0.4;
  CHECK(evaluate_target(task, Sequence(x)) == doctest::Approx(1.0));
  const Vector z = retrieved_features(task, Sequence(x));
  CHECK(z(0) == 0.9);
  CHECK(z(1) == 0.1);
}

TEST_CASE("coordinate-min task sums the coordinate minima") {
  const auto task = make_coordinate_min_task(2, 3);
  Matrix x(3, 2);
  x << 0.3, 0.8, 0.6, 0.2, 0.9, 0.5;
  CHECK(evaluate_target(task, Sequence(x)) == doctest::Approx(0.5));
}

TEST_CASE("target is permutation invariant") {
  const auto task = make_synthetic_task(2, 8);
  const auto data = sample_dataset(task, 5, 1, 2);
  for (const auto& r : data.train) {
    Matrix flipped = r.x.tokens.colwise().reverse();
    CHECK(evaluate_target(task, Sequence(flipped)) == doctest::Approx(r.label).epsilon(1e-14));
  }
}

TEST_CASE("task validation") {
  auto task = make_toy_task(8);
  task.components[0].index_set = {0};  // below ceil(T/4) = 2
  CHECK_THROWS_AS(task.validate(), InvalidInput);
  task = make_toy_task(8);
  task.components[1].index_set = {3, 2};
  CHECK_THROWS_AS(task.validate(), InvalidInput);
  task = make_toy_task(8);
  task.components[1].index_set = {0, 8};
  CHECK_THROWS_AS(task.validate(), InvalidInput);
  task = make_toy_task(8);
  task.components.clear();
  CHECK_THROWS_AS(task.validate(), InvalidInput);
  CHECK_THROWS_AS(evaluate_target(make_toy_task(8), Sequence(Matrix::Zero(7, 1))), InvalidInput);
}

TEST_CASE("dataset sampling is deterministic and split-separated") {
  const auto task = make_synthetic_task(0, 8);
  const auto a = sample_dataset(task, 20, 5, 1);
  const auto b = sample_dataset(task, 20, 5, 1);
  const auto c = sample_dataset(task, 20, 5, 2);
  REQUIRE(a.train.size() == 20);
  REQUIRE(a.val.size() == 5);
  CHECK(a.train[7].x.tokens == b.train[7].x.tokens);
  CHECK(a.train[0].x.tokens != c.train[0].x.tokens);
  CHECK(a.train[0].x.tokens != a.val[0].x.tokens);
  // A larger training split leaves the validation split unchanged.
  const auto d = sample_dataset(task, 40, 5, 1);
  CHECK(d.val[3].x.tokens == a.val[3].x.tokens);
  CHECK_THROWS_AS(sample_dataset(task, 0, 5, 1), InvalidInput);
}

TEST_CASE("gaussian tokens for the synthetic task, unit cube for the toy task") {
  const auto g = sample_dataset(make_synthetic_task(0, 32), 50, 1, 0);
  double lo = 0;
  for (const auto& r : g.train) lo = std::min(lo, r.x.tokens.minCoeff());
  CHECK(lo < -1.0);
  const auto u = sample_dataset(make_toy_task(32), 50, 1, 0);
  for (const auto& r : u.train) {
    CHECK(r.x.tokens.minCoeff() >= 0.0);
    CHECK(r.x.tokens.maxCoeff() <= 1.0);
  }
}

TEST_CASE("dataset JSON-lines round trip is bit exact") {
  const auto task = make_synthetic_task(5, 8);
  const auto data = sample_dataset(task, 6, 3, 5);
  std::stringstream ss;
  write_dataset_jsonl(data, ss);
  const auto back = read_dataset_jsonl(ss);
  REQUIRE(back.train.size() == 6);
  REQUIRE(back.val.size() == 3);
  CHECK(back.meta.length == 8);
  CHECK(back.meta.dim == 4);
  CHECK(back.meta.projections == data.meta.projections);
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(back.train[i].x.tokens == data.train[i].x.tokens);
    CHECK(back.train[i].label == data.train[i].label);
  }
  CHECK(back.val[2].label == data.val[2].label);
}

TEST_CASE("malformed dataset input throws") {
  std::stringstream empty;
  CHECK_THROWS(read_dataset_jsonl(empty));
  std::stringstream bad("{\"meta\": {\"T\": 2}}\n{\"split\": \"train\", \"tokens\": [[1.0], [2.0, 3.0]], \"label\": 1}\n");
  CHECK_THROWS(read_dataset_jsonl(bad));
}
