// Acceptance suite: one PASS/FAIL line per primary criterion.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "headlab/analysis.hpp"
#include "headlab/constructions/bounds.hpp"
#include "headlab/constructions/collision.hpp"
#include "headlab/constructions/memorization.hpp"
#include "headlab/constructions/order_statistics.hpp"
#include "headlab/constructions/relu_max.hpp"
#include "headlab/constructions/softmin.hpp"
#include "headlab/harness.hpp"
#include "headlab/model.hpp"
#include "headlab/report.hpp"

using namespace headlab;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::vector<Sequence> uniform_sequences(std::size_t count, Eigen::Index T, Eigen::Index d, CounterRng rng) {
  std::vector<Sequence> out;
  out.reserve(count);
  for (std::size_t s = 0; s < count; ++s) out.emplace_back(rng.uniform_matrix(T, d, 0, 1));
  return out;
}

// --- criteria ---------------------------------------------------------------

Outcome gradient_correctness() {
  CounterRng rng(2024);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    auto r = rng.split(static_cast<std::uint64_t>(trial));
    ModelConfig c;
    c.length = 1 + static_cast<Eigen::Index>(r.below(4));
    c.input_dim = 1 + static_cast<Eigen::Index>(r.below(3));
    c.heads = 1 + static_cast<Eigen::Index>(r.below(3));
    c.head_dim = 1 + static_cast<Eigen::Index>(r.below(3));
    c.hidden = 1 + static_cast<Eigen::Index>(r.below(6));
    c.beta = r.uniform(0.5, 2.0);
    const auto params = init_params(c, r.split("init"));
    const Eigen::Index batch = 2;
    const Matrix tokens = r.normal_matrix(batch * c.length, c.input_dim);
    const Vector targets = r.normal_matrix(batch, 1);
    auto g = build_loss_graph(params, tokens, targets);
    g.tape.forward();
    g.tape.backward(g.loss);
    // The finite-difference side uses the plain forward pass, not the tape.
    auto loss = [&](const TransformerParams& p) {
      return (forward_batch(p, tokens, batch) - targets).squaredNorm() / static_cast<double>(batch);
    };
    auto probe = params;
    const auto tensors = probe.tensors();
    for (std::size_t k = 0; k < tensors.size(); ++k) {
      Matrix& w = *tensors[k];
      const Matrix& analytic = g.tape.grad(g.params[k]);
      for (Eigen::Index i = 0; i < w.size(); ++i) {
        const double keep = w.data()[i];
        const double step = 1e-5;
        w.data()[i] = keep + step;
        const double up = loss(probe);
        w.data()[i] = keep - step;
        const double down = loss(probe);
        w.data()[i] = keep;
        const double num = (up - down) / (2 * step);
        const double a = analytic.data()[i];
        const double rel = std::abs(a - num) / std::max({std::abs(a), std::abs(num), 1e-6});
        worst = std::max(worst, rel);
      }
    }
  }
  return {worst <= 1e-4, fmt("max relative error %.3g over 100 configurations", worst)};
}

Outcome softmin_bound_check() {
  std::size_t violations = 0, checks = 0;
  double worst_ratio = 0.0, lowest = 1.0;
  for (Eigen::Index D : {1, 2, 3})
    for (Eigen::Index T : {8, 16, 32})
      for (double beta : {50.0, 200.0}) {
        SoftminOptions opt;
        opt.beta = beta;
        opt.enforce_epsilon = false;
        const auto model = build_softmin_model(make_coordinate_min_task(D, T), 1.0, opt);
        const auto seqs = uniform_sequences(10000, T, D, CounterRng(static_cast<std::uint64_t>(D * 1000 + T)).split(
                                                             static_cast<std::uint64_t>(beta)));
        // Direct evaluation of the sandwich from the attention weights.
        for (const auto& x : seqs) {
          const Matrix attn = model.attention(x);
          for (Eigen::Index i = 0; i < D; ++i) {
            const double m = x.tokens.col(i).minCoeff();
            double dev = 0.0;
            for (Eigen::Index t = 0; t < T; ++t) dev += attn(i, t) * (x.tokens(t, i) - m);
            const double bound = (static_cast<double>(T) - 1) / (std::exp(1.0) * beta) + T * std::exp(-beta);
            ++checks;
            if (dev < 0.0 || dev > bound) ++violations;
            worst_ratio = std::max(worst_ratio, dev / bound);
            lowest = std::min(lowest, dev);
          }
        }
        // The library verifier must agree.
        if (!verify_softmin_bound(model, seqs).ok()) ++violations;
      }
  return {violations == 0,
          fmt("%zu violations in %zu head checks; max deviation/bound %.3g; min deviation %.3g", violations, checks,
              worst_ratio, lowest)};
}

Outcome toy_end_to_end() {
  const auto task = make_toy_task(16);
  const auto model = build_softmin_model(task, 0.05);
  double worst = 0.0;
  for (const auto& x : uniform_sequences(10000, 16, 1, CounterRng(77))) {
    const double truth = x.tokens.maxCoeff() + x.tokens.minCoeff();
    worst = std::max(worst, std::abs(model(x) - truth));
  }
  return {model.heads == 2 && worst <= 0.05,
          fmt("h=%ld beta=%.0f sup error %.4g (achieved bound %.4g)", static_cast<long>(model.heads), model.beta, worst,
              model.achieved_bound)};
}

Outcome relu_max_bound() {
  const auto net = build_relu_max(8, 0.01);
  const auto widths = net.net.hidden_widths();
  double worst = 0.0;
  CounterRng rng(99);
  for (int s = 0; s < 100000; ++s) {
    const Vector x = rng.uniform_matrix(8, 1, 0, 1);
    worst = std::max(worst, std::abs(net(x) - x.maxCoeff()));
  }
  for (int mask = 0; mask < 256; ++mask) {
    Vector x(8);
    for (int t = 0; t < 8; ++t) x(t) = (mask >> t) & 1;
    worst = std::max(worst, std::abs(net(x) - x.maxCoeff()));
  }
  const bool shape = widths.size() == 2 && widths[0] == 800 && widths[1] == 200;
  return {shape && worst <= 0.01,
          fmt("n=%ld widths %ld,%ld; max error %.4g", static_cast<long>(net.resolution),
              static_cast<long>(widths.size() > 0 ? widths[0] : -1), static_cast<long>(widths.size() > 1 ? widths[1] : -1),
              worst)};
}

Outcome stacking_exactness() {
  CounterRng rng(5);
  auto layer = [&](Eigen::Index out, Eigen::Index in, bool relu) {
    return DenseLayer{rng.uniform_matrix(out, in, -1, 1), Vector(rng.uniform_matrix(out, 1, -1, 1)), relu};
  };
  DenseNet f1, f2, f3;
  f1.layers = {layer(10, 4, true), layer(6, 10, false)};
  f2.layers = {layer(12, 6, true), layer(8, 12, true), layer(3, 8, false)};
  f3.layers = {layer(9, 3, true), layer(1, 9, false)};
  const auto stacked = stack_networks(f1, f2, f3);
  // Sequential oracle with explicit loops.
  auto apply = [](const DenseNet& net, Vector v) {
    for (const auto& l : net.layers) {
      Vector next(l.out_dim());
      for (Eigen::Index r = 0; r < l.out_dim(); ++r) {
        double s = l.bias(r);
        for (Eigen::Index c = 0; c < l.in_dim(); ++c) s += l.weight(r, c) * v(c);
        next(r) = l.relu ? std::max(s, 0.0) : s;
      }
      v = next;
    }
    return v;
  };
  Vector got(1000), want(1000);
  double pointwise = 0.0;
  for (int s = 0; s < 1000; ++s) {
    const Vector x = rng.uniform_matrix(4, 1, -2, 2);
    got(s) = stacked(x)(0);
    want(s) = apply(f3, apply(f2, apply(f1, x)))(0);
    pointwise = std::max(pointwise, std::abs(got(s) - want(s)) / std::max(std::abs(want(s)), 1e-12));
  }
  const double normwise = (got - want).norm() / want.norm();
  const double absolute = (got - want).cwiseAbs().maxCoeff();
  return {stacked.depth() == 5 && normwise <= 1e-12,
          fmt("depth %zu; relative error %.3g over all outputs (max abs %.3g, max pointwise %.3g)", stacked.depth(),
              normwise, absolute, pointwise)};
}

Outcome memorization_model() {
  const auto model = build_memorization_model(make_coordinate_min_task(1, 8), 0.02);
  double worst = 0.0;
  for (const auto& x : uniform_sequences(10000, 8, 1, CounterRng(31))) worst = std::max(worst, std::abs(model(x) - x.tokens.minCoeff()));
  return {model.embed == 8 && worst <= 0.02, fmt("n=%ld; max |output - min| %.4g", static_cast<long>(model.embed), worst)};
}

Outcome order_statistics_and_selector() {
  CounterRng rng(41);
  std::size_t mismatches = 0;
  for (int rep = 0; rep < 200; ++rep) {
    const Sequence x(rng.uniform_matrix(8, 2, 0, 1));
    for (Eigen::Index j = 0; j < 2; ++j) {
      // v = max over 2-subsets of the subset minimum; w = min of the subset maximum.
      double v = -1, w = 2;
      for (int a = 0; a < 8; ++a)
        for (int b = a + 1; b < 8; ++b) {
          v = std::max(v, std::min(x.tokens(a, j), x.tokens(b, j)));
          w = std::min(w, std::max(x.tokens(a, j), x.tokens(b, j)));
        }
      const auto os = order_statistic_features(x, j);
      if (os.v != v || os.w != w) ++mismatches;
      for (int t = 0; t < 8; ++t)
        if (os.y(t) != std::min(x.tokens(t, j), v) || 1.0 - os.z(t) != std::max(x.tokens(t, j), w)) ++mismatches;
    }
  }
  std::size_t not_better = 0;
  for (int rep = 0; rep < 100; ++rep) {
    const Sequence x(rng.uniform_matrix(8, 2, 0, 1));
    const double lo = (smooth_selector(x, 10.0) - x.tokens).cwiseAbs().maxCoeff();
    const double hi = (smooth_selector(x, 1e4) - x.tokens).cwiseAbs().maxCoeff();
    if (!(hi < lo)) ++not_better;
  }
  return {mismatches == 0 && not_better == 0,
          fmt("%zu order-statistic mismatches; %zu sequences where q=1e4 is not below q=10", mismatches, not_better)};
}

Outcome desk_phase_transition() {
  const auto spec = grid_spec_from_config(KeyValueConfig::load(HEADLAB_DESK_CONFIG));
  const std::filesystem::path results = std::filesystem::path(HEADLAB_DESK_OUT) / "results.jsonl";
  GridOptions opts;
  opts.threads = std::max(1U, std::thread::hardware_concurrency());
  const auto fresh = run_grid(spec, results, opts);
  const auto summary = min_over_seeds(read_results(results));
  std::ofstream csv(std::filesystem::path(HEADLAB_DESK_OUT) / "summary.csv");
  write_summary_csv(summary, csv);
  auto err = [&](Eigen::Index h, Eigen::Index T) {
    const auto it = summary.find({h, T, spec.hidden[0]});
    return it == summary.end() ? std::nan("") : it->second.min_nmse;
  };
  bool h4 = true, h2 = true, mono = true;
  std::ostringstream detail;
  detail << fresh.size() << " new runs;";
  double prev = -1;
  for (auto T : spec.lengths) {
    const double a = err(4, T), b = err(2, T);
    h4 = h4 && a <= 1e-3;
    h2 = h2 && b >= 5e-3;
    mono = mono && b >= prev;
    prev = b;
    detail << " T=" << T << ": h2 " << fmt("%.3g", b) << " h4 " << fmt("%.3g", a) << ";";
  }
  detail << (h4 ? "" : " h=4 above 1e-3;") << (h2 ? "" : " h=2 below 5e-3;") << (mono ? "" : " h=2 not monotone;");
  return {h4 && h2 && mono, detail.str()};
}

Outcome fixture_table_transition() {
  std::ifstream in(std::string(HEADLAB_FIXTURES) + "/synthetic_variance.csv");
  const auto table = err_table(read_err_grid_csv(in), 0);
  const auto d_hat = detect_transition(table);
  std::ostringstream detail;
  detail << "D_hat=" << (d_hat ? std::to_string(*d_hat) : "none") << "; R(h) =";
  bool ok = d_hat == 4;
  for (Eigen::Index h = 1; h <= 5; ++h) {
    const double r = weighted_reversal_score(row(table, h)).score;
    detail << " " << fmt("%.3g", r);
    ok = ok && (h <= 3 ? r == 0.0 : r > 0.0);
  }
  return {ok, detail.str()};
}

Outcome scaling_fit_closed_loop() {
  ErrTable table;
  for (Eigen::Index h = 1; h <= 5; ++h)
    for (Eigen::Index T : {8, 16, 32, 64, 128}) {
      const double lt = static_cast<double>(T);
      table[{h, T}] = 1.0 * std::pow(lt, 0.5) * std::exp(-1.4 * static_cast<double>(h) / std::pow(lt, 0.25));
    }
  const auto fit = fit_scaling_law(table);
  const bool ok = std::abs(fit.alpha + 1.4) <= 0.05 && std::abs(fit.delta - 0.25) <= 0.05 && fit.alpha < 0 &&
                  fit.delta > 0;
  return {ok, fmt("alpha %.4f delta %.4f beta %.4f c %.4f", fit.alpha, fit.delta, fit.beta_exp, fit.c)};
}

Outcome collision_probe() {
  const auto task = make_toy_task(16);
  SoftminOptions opt;
  opt.beta = 700.0;
  opt.enforce_epsilon = false;
  // One head on the min feature only: the max feature never reaches the FFN.
  const auto model = build_softmin_model(restrict_components(task, {1}), 1.0, opt);
  CollisionOptions co;
  co.budget = 20000;
  co.min_gap = 0.1;
  const auto res = find_attention_collision([&](const Sequence& x) { return model.post_attention(x); }, task, co);
  const auto width = ffn_width_lower_bound(1e-12, 0.1, 2);
  const double recomputed_distance = (model.post_attention(res.first) - model.post_attention(res.second)).norm();
  const double recomputed_gap = std::abs(evaluate_target(task, res.first) - evaluate_target(task, res.second));
  const bool ok = res.found && recomputed_distance <= 1e-12 && recomputed_gap >= 0.1 && width > 10'000'000'000ULL;
  return {ok, fmt("distance %.3g gap %.3g; width bound %llu", recomputed_distance, recomputed_gap,
                  static_cast<unsigned long long>(width))};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gradient-correctness", gradient_correctness},
      {"softmin-bound", softmin_bound_check},
      {"toy-eps-approximation", toy_end_to_end},
      {"relu-max-bound", relu_max_bound},
      {"stacking-exactness", stacking_exactness},
      {"memorization-model", memorization_model},
      {"order-statistics-selector", order_statistics_and_selector},
      {"desk-phase-transition", desk_phase_transition},
      {"fixture-table-transition-reversal", fixture_table_transition},
      {"scaling-fit-closed-loop", scaling_fit_closed_loop},
      {"collision-probe", collision_probe},
  };
  int failures = 0;
  for (const auto& [name, check] : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("%s %s: %s (%.1fs)\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str(), secs);
    std::fflush(stdout);
    if (!o.pass) ++failures;
  }
  std::printf("%d of %zu criteria failed\n", failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
