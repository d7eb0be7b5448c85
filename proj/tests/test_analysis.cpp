#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "headlab/analysis.hpp"
#include "headlab/errors.hpp"
#include "headlab/report.hpp"

using namespace headlab;
namespace fs = std::filesystem;

namespace {

ErrTable synthetic_table(double c, double b, double alpha, double delta, std::vector<Eigen::Index> heads,
                         std::vector<Eigen::Index> lengths) {
  ErrTable t;
  for (auto h : heads)
    for (auto T : lengths) {
      const double lt = static_cast<double>(T);
      t[{h, T}] = c * std::pow(lt, b) * std::exp(alpha * static_cast<double>(h) / std::pow(lt, delta));
    }
  return t;
}

}  // namespace

TEST_CASE("reversal score oracle values") {
  // Increasing row: no reversals.
  CHECK(weighted_reversal_score({{8, 1.0}, {16, 2.0}, {32, 3.0}}).score == 0.0);
  // Decreasing row: pairs (1,2):1, (1,3):2, (2,3):1 over range 2.
  CHECK(weighted_reversal_score({{8, 3.0}, {16, 2.0}, {32, 1.0}}).score == doctest::Approx(2.0));
  // One dip: only the pair (8, 16) contributes, 2 over a range of 3.
  CHECK(weighted_reversal_score({{8, 3.0}, {16, 1.0}, {32, 4.0}}).score == doctest::Approx(2.0 / 3.0));
  const auto flat = weighted_reversal_score({{8, 1.0}, {16, 1.0}});
  CHECK(flat.degenerate);
  CHECK(flat.score == 0.0);
}

TEST_CASE("reversal score is invariant to positive scaling") {
  const ErrByLength a{{8, 0.3}, {16, 0.1}, {32, 0.2}, {64, 0.05}};
  ErrByLength b;
  for (auto [T, v] : a) b[T] = 1000 * v;
  CHECK(weighted_reversal_score(a).score == doctest::Approx(weighted_reversal_score(b).score));
}

TEST_CASE("log-log slope and geometric mean") {
  const ErrByLength r{{8, 8.0 * 8.0}, {16, 16.0 * 16.0}, {64, 64.0 * 64.0}};
  CHECK(log_log_slope(r) == doctest::Approx(2.0));
  CHECK(geometric_mean({{1, 2.0}, {2, 8.0}}) == doctest::Approx(4.0));
}

TEST_CASE("detect_transition on constructed tables") {
  ErrTable t;
  for (Eigen::Index T : {8, 32, 128}) {
    const double lt = std::log2(static_cast<double>(T));
    t[{1, T}] = 0.1 * lt;
    t[{2, T}] = 0.01 * lt;  // drops 10x but still grows with T
    t[{3, T}] = 1e-4 / lt;  // drops and decreases
    t[{4, T}] = 1e-5 / lt;
  }
  CHECK(detect_transition(t) == 3);
  // Two head counts are not enough.
  ErrTable two;
  for (auto [k, v] : t)
    if (k.first <= 2) two[k] = v;
  CHECK_FALSE(detect_transition(two).has_value());
  // No sharp drop anywhere.
  ErrTable smooth;
  for (Eigen::Index h = 1; h <= 4; ++h)
    for (Eigen::Index T : {8, 32}) smooth[{h, T}] = 1.0 / static_cast<double>(h);
  CHECK_FALSE(detect_transition(smooth).has_value());
}

TEST_CASE("LAD regression ignores a gross outlier") {
  Matrix X(8, 2);
  Vector y(8);
  for (int i = 0; i < 8; ++i) {
    X(i, 0) = 1;
    X(i, 1) = i;
    y(i) = 2 + 0.5 * i;
  }
  y(3) += 100;
  const Vector beta = lad_regression(X, y);
  CHECK(beta(0) == doctest::Approx(2.0).epsilon(1e-3));
  CHECK(beta(1) == doctest::Approx(0.5).epsilon(1e-3));
}

TEST_CASE("scaling-law fit recovers its generating parameters") {
  const auto t = synthetic_table(1.0, 0.5, -1.4, 0.25, {1, 2, 3, 4, 5}, {8, 16, 32, 64, 128});
  const auto fit = fit_scaling_law(t);
  CHECK(fit.alpha == doctest::Approx(-1.4).epsilon(0.02));
  CHECK(fit.delta == doctest::Approx(0.25).epsilon(0.02));
  CHECK(fit.beta_exp == doctest::Approx(0.5).epsilon(0.02));
  CHECK(fit.objective < 1e-6);
  CHECK(fit.predict(3, 32) == doctest::Approx(t.at({3, 32})).epsilon(1e-4));
}

TEST_CASE("scaling-law fit honours the drop list and its preconditions") {
  auto t = synthetic_table(2.0, 0.3, -1.0, 0.5, {1, 2, 3, 4}, {8, 16, 32});
  t[{4, 16}] = 50.0;  // corrupt the h = 4 row
  const auto fit = fit_scaling_law(t, {4});
  CHECK(fit.dropped == std::vector<Eigen::Index>{4});
  CHECK(fit.alpha == doctest::Approx(-1.0).epsilon(0.02));
  CHECK_THROWS_AS(fit_scaling_law(t, {2, 3}), InvalidInput);
  auto zero = t;
  zero[{1, 8}] = 0.0;
  CHECK_THROWS_AS(fit_scaling_law(zero), InvalidInput);
}

TEST_CASE("err csv reader accepts summary and h,T,nmse layouts") {
  std::stringstream summary("h,T,N,min_nmse,mean_nmse,std_nmse\n1,8,32,0.5,0.6,nan\n2,8,32,nan,nan,nan\n");
  const auto g = read_err_grid_csv(summary);
  CHECK(g.size() == 1);
  CHECK(g.at({1, 8, 32}) == 0.5);
  std::stringstream table("h,T,nmse,std\n4,16,4.36e-5,1.93e-4\n");
  CHECK(read_err_grid_csv(table).at({4, 16, 0}) == doctest::Approx(4.36e-5));
  std::stringstream missing("h,nmse\n1,0.5\n");
  CHECK_THROWS_AS(read_err_grid_csv(missing), InvalidInput);
  std::stringstream ragged("h,T,nmse\n1,8\n");
  CHECK_THROWS_AS(read_err_grid_csv(ragged), InvalidInput);
}

TEST_CASE("write_analysis emits the report and one CSV per figure") {
  const auto dir = fs::temp_directory_path() / "headlab_test_analysis";
  fs::remove_all(dir);
  ErrGrid grid;
  for (auto [k, v] : synthetic_table(1.0, 0.5, -1.4, 0.25, {1, 2, 3}, {8, 16, 32}))
    grid[{k.first, k.second, 32}] = v;
  const auto text = write_analysis(grid, {}, dir);
  for (const char* f : {"report.json", "nmse_vs_h.csv", "log_n_vs_log_nmse.csv", "reversal_vs_h.csv"})
    CHECK(fs::exists(dir / f));
  const auto j = nlohmann::json::parse(text);
  REQUIRE(j["widths"].size() == 1);
  CHECK(j["widths"][0]["N"] == 32);
  CHECK(j["widths"][0]["scaling_fit"].contains("alpha"));
  std::ifstream csv(dir / "nmse_vs_h.csv");
  std::string header;
  std::getline(csv, header);
  CHECK(header == "N,h,T,nmse");
  CHECK_THROWS_AS(write_analysis({}, {}, dir), InvalidInput);
}

TEST_CASE("fixture: variance table parses to 25 cells") {
  std::ifstream in(std::string(HEADLAB_FIXTURES) + "/synthetic_variance.csv");
  REQUIRE(in);
  const auto g = read_err_grid_csv(in);
  CHECK(g.size() == 25);
  CHECK(g.at({2, 8, 0}) == doctest::Approx(7.31e-3));
}
