#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "headlab/constructions/bounds.hpp"
#include "headlab/constructions/collision.hpp"
#include "headlab/constructions/dense_net.hpp"
#include "headlab/constructions/memorization.hpp"
#include "headlab/constructions/order_statistics.hpp"
#include "headlab/constructions/relu_max.hpp"
#include "headlab/constructions/softmin.hpp"
#include "headlab/constructions/verification.hpp"
#include "headlab/errors.hpp"

using namespace headlab;

namespace {

std::vector<Sequence> uniform_sequences(std::size_t count, Eigen::Index T, Eigen::Index d, std::uint64_t seed) {
  CounterRng rng(seed);
  std::vector<Sequence> out;
  for (std::size_t s = 0; s < count; ++s) out.emplace_back(rng.uniform_matrix(T, d, 0, 1));
  return out;
}

DenseLayer random_layer(CounterRng& rng, Eigen::Index out, Eigen::Index in, bool relu) {
  return DenseLayer{rng.uniform_matrix(out, in, -1, 1), Vector(rng.uniform_matrix(out, 1, -1, 1)), relu};
}

}  // namespace

// --- relu max ---------------------------------------------------------------

TEST_CASE("relu-max widths are T n and 2 n") {
  const auto net = build_relu_max(8, 0.01);
  CHECK(net.resolution == 100);
  REQUIRE(net.net.depth() == 3);
  CHECK(net.net.hidden_widths() == std::vector<Eigen::Index>{800, 200});
  CHECK(build_relu_max(3, 0.3).resolution == 4);
  CHECK(build_relu_max(3, 0.25).resolution == 4);
}

TEST_CASE("relu-max output lies in [max, max + 1/n]") {
  const auto net = build_relu_max(6, 0.05);
  CounterRng rng(1);
  for (int i = 0; i < 2000; ++i) {
    const Vector x = rng.uniform_matrix(6, 1, 0, 1);
    const double out = net(x), m = x.maxCoeff();
    CHECK(out >= m - 1e-12);
    CHECK(out <= m + 0.05 + 1e-12);
  }
  // Exact at grid points, including the corners.
  Vector x = Vector::Zero(6);
  CHECK(net(x) == doctest::Approx(0.0).epsilon(1e-14));
  x(2) = 1.0;
  CHECK(net(x) == doctest::Approx(1.0));
  x(3) = 0.4;
  CHECK(net(x) == doctest::Approx(1.0));
}

TEST_CASE("relu-max is nondecreasing in every coordinate") {
  const auto net = build_relu_max(4, 0.1);
  CounterRng rng(2);
  for (int i = 0; i < 300; ++i) {
    Vector x = rng.uniform_matrix(4, 1, 0, 0.9);
    const double before = net(x);
    x(static_cast<Eigen::Index>(rng.below(4))) += 0.1;
    CHECK(net(x) >= before - 1e-12);
  }
}

TEST_CASE("relu-min output lies in [min - 1/n, min]") {
  const auto net = build_relu_min(5, 20);
  CounterRng rng(3);
  for (int i = 0; i < 1000; ++i) {
    const Vector x = rng.uniform_matrix(5, 1, 0, 1);
    const double out = net(x)(0), m = x.minCoeff();
    CHECK(out <= m + 1e-12);
    CHECK(out >= m - 0.05 - 1e-12);
  }
}

TEST_CASE("relu-max rejects bad eps") {
  CHECK_THROWS_AS(build_relu_max(4, 0.0), InvalidInput);
  CHECK_THROWS_AS(build_relu_max(4, 1.5), InvalidInput);
  CHECK_THROWS_AS(build_relu_max(0, 0.1), InvalidInput);
}

// --- dense nets ---------------------------------------------------------------

TEST_CASE("exact affine net reproduces the map") {
  const AffineMap f{Vector::LinSpaced(3, -1, 2), 0.25};
  const auto net = exact_affine_net(f);
  CounterRng rng(4);
  for (int i = 0; i < 50; ++i) {
    const Vector x = rng.uniform_matrix(3, 1, -3, 3);
    CHECK(net(x)(0) == doctest::Approx(f(x.transpose())).epsilon(1e-14));
  }
}

TEST_CASE("compose merges junction layers and matches sequential evaluation") {
  CounterRng rng(5);
  DenseNet a, b;
  a.layers = {random_layer(rng, 6, 3, true), random_layer(rng, 2, 6, false)};
  b.layers = {random_layer(rng, 4, 2, true), random_layer(rng, 4, 4, true), random_layer(rng, 1, 4, false)};
  const auto ab = compose(a, b);
  CHECK(ab.depth() == 4);
  for (int i = 0; i < 100; ++i) {
    const Vector x = rng.uniform_matrix(3, 1, -1, 1);
    CHECK(ab(x)(0) == doctest::Approx(b(a(x))(0)).epsilon(1e-12));
  }
}

TEST_CASE("parallel nets act on stacked inputs") {
  CounterRng rng(6);
  DenseNet a, b;
  a.layers = {random_layer(rng, 3, 2, true), random_layer(rng, 1, 3, false)};
  b.layers = {random_layer(rng, 5, 1, true), random_layer(rng, 2, 5, false)};
  const auto p = parallel({a, b});
  CHECK(p.input_dim() == 3);
  CHECK(p.output_dim() == 3);
  const Vector x = rng.uniform_matrix(3, 1, -1, 1);
  const Vector out = p(x);
  CHECK(out(0) == doctest::Approx(a(x.head(2))(0)).epsilon(1e-14));
  CHECK((out.tail(2) - b(x.tail(1))).norm() < 1e-14);
  DenseNet deep = b;
  deep.layers.push_back(random_layer(rng, 1, 2, false));
  CHECK_THROWS_AS(parallel({a, deep}), InvalidInput);
}

TEST_CASE("precompose_affine applies x -> A x + c first") {
  CounterRng rng(7);
  DenseNet n;
  n.layers = {random_layer(rng, 4, 2, true), random_layer(rng, 1, 4, false)};
  const Matrix A = rng.uniform_matrix(2, 3, -1, 1);
  const Vector c = rng.uniform_matrix(2, 1, -1, 1);
  const auto m = precompose_affine(n, A, c);
  const Vector x = rng.uniform_matrix(3, 1, -1, 1);
  CHECK(m(x)(0) == doctest::Approx(n(Vector(A * x + c))(0)).epsilon(1e-13));
}

TEST_CASE("stacking gives a 5-layer net equal to F3(F2(F1))") {
  CounterRng rng(8);
  DenseNet f1, f2, f3;
  f1.layers = {random_layer(rng, 5, 2, true), random_layer(rng, 3, 5, false)};
  f2.layers = {random_layer(rng, 7, 3, true), random_layer(rng, 4, 7, true), random_layer(rng, 2, 4, false)};
  f3.layers = {random_layer(rng, 3, 2, true), random_layer(rng, 1, 3, false)};
  const auto s = stack_networks(f1, f2, f3);
  CHECK(s.depth() == 5);
  for (int i = 0; i < 200; ++i) {
    const Vector x = rng.uniform_matrix(2, 1, -2, 2);
    const double a = s(x)(0), b = f3(f2(f1(x)))(0);
    CHECK(std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(b)));
  }
  CHECK_THROWS_AS(stack_networks(f2, f2, f3), InvalidInput);
  CHECK(verify_stacking(100, 0).ok());
}

TEST_CASE("dense net validation catches broken chains") {
  DenseNet n;
  n.layers = {DenseLayer{Matrix::Ones(3, 2), Vector::Zero(3), true}, DenseLayer{Matrix::Ones(1, 4), Vector::Zero(1), false}};
  CHECK_THROWS_AS(n.validate(), InvalidInput);
}

TEST_CASE("fit_two_layer approximates a smooth function") {
  const auto fit = fit_two_layer([](const Vector& x) { return std::sin(3 * x(0)) * 0.5 + 0.5; }, 1, 200, 2000, 500,
                                 CounterRng(9));
  CHECK(fit.net.depth() == 2);
  CHECK(fit.sup_error < 0.01);
}

// --- softmin -------------------------------------------------------------------

TEST_CASE("softmin bound and beta_eps formulas") {
  const double e = std::numbers::e;
  CHECK(softmin_bound(8, 16, 10.0) == doctest::Approx(7 / (e * 10) + 16 * std::exp(-10.0)));
  CHECK(softmin_bound(1, 4, 2.0) == doctest::Approx(4 * std::exp(-2.0)));
  // K = 4 T L0 D / eps with C_T = T for T >= 1.
  CHECK(beta_epsilon(16, 2.0, 2, 0.05) == doctest::Approx(4 * 16 * 2 * 2 / 0.05));
  CHECK(beta_epsilon(1, 1.0, 1, 1e9) == doctest::Approx(1.0));
}

TEST_CASE("softmin sandwich holds with S_i = [T]") {
  for (Eigen::Index D : {1, 2, 3})
    for (double beta : {5.0, 50.0}) {
      const auto task = make_coordinate_min_task(D, 16);
      SoftminOptions opt;
      opt.beta = beta;
      opt.enforce_epsilon = false;
      const auto model = build_softmin_model(task, 1.0, opt);
      const auto rep = verify_softmin_bound(model, uniform_sequences(300, 16, D, 10 + D));
      CHECK(rep.ok());
      CHECK(rep.min_observed >= 0.0);
      CHECK(rep.max_slack_ratio <= 1.0);
      CHECK(rep.max_observed > 0.0);
    }
}

TEST_CASE("softmin readout equals a direct softmin oracle") {
  const auto task = make_coordinate_min_task(2, 8);
  SoftminOptions opt;
  opt.beta = 7.0;
  opt.enforce_epsilon = false;
  const auto model = build_softmin_model(task, 1.0, opt);
  const auto seqs = uniform_sequences(20, 8, 2, 3);
  for (const auto& x : seqs) {
    const Vector z = model.readouts(x);
    for (Eigen::Index i = 0; i < 2; ++i) {
      double num = 0, den = 0;
      for (Eigen::Index t = 0; t < 8; ++t) {
        const double w = std::exp(-7.0 * x.tokens(t, i));
        num += w * x.tokens(t, i);
        den += w;
      }
      CHECK(z(i) == doctest::Approx(num / den).epsilon(1e-12));
    }
  }
}

TEST_CASE("softmin upper side holds on proper index sets; lower side can fail") {
  auto task = make_coordinate_min_task(1, 8);
  task.components[0].index_set = {0, 1, 2, 3};
  SoftminOptions opt;
  opt.beta = 20.0;
  opt.enforce_epsilon = false;
  const auto model = build_softmin_model(task, 1.0, opt);
  const auto rep = verify_softmin_bound(model, uniform_sequences(500, 8, 1, 4));
  CHECK(rep.upper_violations == 0);
  // Off-set tokens with Psi = 0 score like in-set tokens with Psi = 1 and
  // pull the readout below the in-set minimum.
  Matrix x = Matrix::Zero(8, 1);
  x.topRows(4).setOnes();
  const auto counter = verify_softmin_bound(model, {Sequence(x)});
  CHECK(counter.lower_violations == 1);
  CHECK(counter.min_observed < 0.0);
}

TEST_CASE("toy model meets eps = 0.05 with two heads") {
  const auto task = make_toy_task(16);
  const auto model = build_softmin_model(task, 0.05);
  CHECK(model.heads == 2);
  CHECK(model.embed_dim() == 4);
  CHECK(model.achieved_bound <= 0.05);
  CHECK(model.beta == 700.0);  // beta_eps = 5120 is clipped
  CHECK_FALSE(model.warnings.empty());
  double worst = 0;
  for (const auto& x : uniform_sequences(2000, 16, 1, 5))
    worst = std::max(worst, std::abs(model(x) - evaluate_target(task, x)));
  CHECK(worst <= model.achieved_bound);
  CHECK(worst > 0.0);
}

TEST_CASE("softmin construction errors") {
  const auto task = make_toy_task(8);
  SoftminOptions opt;
  opt.heads = 1;
  CHECK_THROWS_AS(build_softmin_model(task, 0.05, opt), ConstructionError);
  SoftminOptions low;
  low.beta = 0.5;
  CHECK_THROWS_AS(build_softmin_model(task, 0.05, low), ConstructionError);
  SoftminOptions weak;
  weak.beta = 2.0;
  CHECK_THROWS_AS(build_softmin_model(task, 0.01, weak), ConstructionError);
  // Synthetic components leave [0,1].
  CHECK_THROWS_AS(build_softmin_model(make_synthetic_task(0, 8), 0.05), ConstructionError);
}

TEST_CASE("restrict_components keeps the listed features") {
  const auto task = make_toy_task(8);
  const auto only_min = restrict_components(task, {1});
  CHECK(only_min.intrinsic_dimension() == 1);
  CHECK(only_min.components[0].mode == Extremum::Min);
  CHECK(only_min.outer_lipschitz == 1.0);
  CHECK_THROWS_AS(restrict_components(task, {2}), InvalidInput);
  CHECK(affine_lipschitz(AffineMap{Vector::LinSpaced(3, -1, 1), 4.0}) == doctest::Approx(2.0));
}

// --- memorization --------------------------------------------------------------

TEST_CASE("memorization model tracks the minimum") {
  const auto task = make_coordinate_min_task(1, 8);
  const auto model = build_memorization_model(task, 0.02);
  CHECK(model.embed == 8);
  CHECK(model.ffn.depth() == 5);
  CHECK(model.achieved_bound <= 0.02);
  for (const auto& x : uniform_sequences(500, 8, 1, 6)) {
    CHECK(std::abs(model(x) - x.tokens.minCoeff()) <= model.achieved_bound);
    const Vector u = model.post_attention(x);
    CHECK(model.ffn(u)(0) == doctest::Approx(model.sequential(u)).epsilon(1e-12));
  }
  MemorizationOptions narrow;
  narrow.embed_dim = 4;
  CHECK_THROWS_AS(build_memorization_model(task, 0.02, narrow), ConstructionError);
  CHECK_THROWS_AS(build_memorization_model(task, 0.0), InvalidInput);
}

TEST_CASE("memorization attention is uniform") {
  const auto model = build_memorization_model(make_coordinate_min_task(1, 4), 0.1);
  Matrix x(4, 1);
  x << 0.1, 0.2, 0.3, 0.4;
  const Vector u = model.post_attention(Sequence(x));
  for (int t = 0; t < 4; ++t) CHECK(u(t) == doctest::Approx(x(t, 0) / 4));
}

// --- order statistics ----------------------------------------------------------

TEST_CASE("order statistic features match a sorting oracle") {
  CounterRng rng(12);
  for (int rep = 0; rep < 50; ++rep) {
    const Matrix x = rng.uniform_matrix(8, 2, 0, 1);
    for (Eigen::Index j = 0; j < 2; ++j) {
      const auto os = order_statistic_features(Sequence(x), j);
      std::vector<double> sorted_col;
      for (int t = 0; t < 8; ++t) sorted_col.push_back(x(t, j));
      std::sort(sorted_col.begin(), sorted_col.end());
      CHECK(os.v == sorted_col[8 - 2]);  // 2nd largest, m = 2
      CHECK(os.w == sorted_col[1]);      // 2nd smallest
      for (int t = 0; t < 8; ++t) {
        CHECK(os.y(t) == std::min(x(t, j), os.v));
        CHECK(1 - os.z(t) == doctest::Approx(std::max(x(t, j), os.w)).epsilon(1e-15));
      }
    }
  }
  CHECK_THROWS_AS(order_statistic_features(Sequence(Matrix::Zero(6, 1)), 0), InvalidInput);
}

TEST_CASE("order statistics match subset enumeration") {
  // v is the largest value u such that some m-subset has every entry >= u.
  CounterRng rng(13);
  for (int rep = 0; rep < 20; ++rep) {
    const Matrix x = rng.uniform_matrix(8, 1, 0, 1);
    double v = -1, w = 2;
    for (int mask = 0; mask < 256; ++mask) {
      if (__builtin_popcount(static_cast<unsigned>(mask)) != 2) continue;
      double lo = 2, hi = -1;
      for (int t = 0; t < 8; ++t)
        if (mask >> t & 1) {
          lo = std::min(lo, x(t, 0));
          hi = std::max(hi, x(t, 0));
        }
      v = std::max(v, lo);
      w = std::min(w, hi);
    }
    const auto os = order_statistic_features(Sequence(x), 0);
    CHECK(os.v == v);
    CHECK(os.w == w);
  }
}

TEST_CASE("smooth selector sharpens as q grows") {
  const auto r = verify_selector(8, 2, 100, 1);
  CHECK(r.ok());
  CounterRng rng(14);
  const Sequence x(rng.uniform_matrix(8, 2, 0, 1));
  const double e10 = (smooth_selector(x, 10) - x.tokens).cwiseAbs().maxCoeff();
  const double e4 = (smooth_selector(x, 1e4) - x.tokens).cwiseAbs().maxCoeff();
  CHECK(e4 < e10);
  CHECK(smooth_selector(x, 1e4).allFinite());
  CHECK_THROWS_AS(smooth_selector(x, 0.0), InvalidInput);
}

// --- bounds and collisions -------------------------------------------------------

TEST_CASE("ffn width lower bound") {
  CHECK(ffn_width_lower_bound(1.0, 10.0, 4) == 5);
  CHECK(ffn_width_lower_bound(0.1, 0.1, 1) == 1);
  CHECK(ffn_width_lower_bound(0.02, 1.0, 4) == 25);
  CHECK(ffn_width_lower_bound(1e-12, 0.1, 2) == 70710678119ULL);
  CHECK(ffn_width_lower_bound(1e-300, 1e300, 1) == std::numeric_limits<std::uint64_t>::max());
  CHECK_THROWS_AS(ffn_width_lower_bound(0.0, 1.0, 1), InvalidInput);
  CHECK_THROWS_AS(ffn_width_lower_bound(1.0, -1.0, 1), InvalidInput);
  CHECK_THROWS_AS(ffn_width_lower_bound(1.0, 1.0, 0), InvalidInput);
}

TEST_CASE("head deficit parameter count") {
  // (T/4 - s - D + 1) / ((n + 1) s + 1) - 1 with T = 64, s = 1, n = 2, D = 2.
  CHECK(head_deficit_parameter_count(64, 1, 2, 2) == doctest::Approx(14.0 / 4.0 - 1.0));
}

TEST_CASE("collision probe finds an exact collision for a min-only model") {
  const auto task = make_toy_task(16);
  SoftminOptions opt;
  opt.beta = 700.0;
  opt.enforce_epsilon = false;
  const auto model = build_softmin_model(restrict_components(task, {1}), 1.0, opt);
  CollisionOptions co;
  co.budget = 5000;
  co.min_gap = 0.1;
  const auto res = find_attention_collision([&](const Sequence& x) { return model.post_attention(x); }, task, co);
  REQUIRE(res.found);
  CHECK(res.distance <= 1e-12);
  CHECK(res.gap >= 0.1);
  CHECK_FALSE(res.implied_width.has_value());
  CHECK(std::abs(evaluate_target(task, res.first) - evaluate_target(task, res.second)) == doctest::Approx(res.gap));
}

TEST_CASE("collision probe argument checks") {
  const auto task = make_toy_task(8);
  auto post = [](const Sequence& x) { return Vector(x.tokens.col(0)); };
  CollisionOptions co;
  co.budget = 0;
  CHECK_THROWS_AS(find_attention_collision(post, task, co), InvalidInput);
  co.budget = 10;
  co.heads = 2;
  CHECK_THROWS_AS(find_attention_collision(post, task, co), InvalidInput);
  co.require_head_deficit = false;
  CHECK_NOTHROW(find_attention_collision(post, task, co));
}

TEST_CASE("verification reports") {
  const auto r = verify_relu_max(4, 0.1, 200, 3);
  CHECK(r.ok());
  CHECK(r.samples == 200 + 16);
  CHECK(r.bound == doctest::Approx(0.1));
  CHECK(verify_memorization(8, 0.02, 200, 0).ok());
  CHECK(verify_softmin(2, 8, 30.0, 200, 0).ok());
  CHECK(verify_report_json(r).find("\"ok\": true") != std::string::npos);
}
