// headlab: data generation, training grids, constructions, analysis and the
// collision probe behind one executable.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "headlab/constructions/bounds.hpp"
#include "headlab/constructions/collision.hpp"
#include "headlab/constructions/memorization.hpp"
#include "headlab/constructions/relu_max.hpp"
#include "headlab/constructions/softmin.hpp"
#include "headlab/constructions/verification.hpp"
#include "headlab/errors.hpp"
#include "headlab/harness.hpp"
#include "headlab/report.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace headlab;

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void error_line(const std::string& kind, const std::string& message) {
  std::cerr << json{{"error", kind}, {"message", message}}.dump() << '\n';
}

/// Everything a subcommand needs after parsing.
struct Invocation {
  std::string name;
  KeyValueConfig config;
  std::vector<std::string> overrides;  // every value not coming from the file
  fs::path out;
  std::size_t threads = 1;
};

struct SubcommandSpec {
  std::string name;
  std::string help;
  bool needs_config;
  std::vector<std::string> flags;  // each --flag sets the config key of the same name
  int (*run)(Invocation&);
};

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (text.empty() || text.back() != '\n') out << '\n';
}

void manifest(const Invocation& inv, const std::vector<std::string>& outputs) {
  write_manifest(inv.out / ("manifest-" + inv.name + ".json"), inv.name, inv.config, inv.overrides, outputs);
}

json matrix_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

json net_json(const DenseNet& net) {
  return {{"depth", net.depth()}, {"hidden_widths", net.hidden_widths()}, {"max_abs_entry", net.max_abs_entry()}};
}

RetrievalTask construction_task(const KeyValueConfig& c) {
  const auto T = c.get_int("T");
  const auto name = c.get_or("task", "toy");
  if (name == "toy") return make_toy_task(T);
  if (name == "coordinate-min") return make_coordinate_min_task(c.contains("D") ? c.get_int("D") : 1, T);
  if (name == "synthetic") return make_synthetic_task(static_cast<std::uint64_t>(c.get_int("data_seed")), T);
  throw InvalidInput("unknown task '" + name + "' (toy, coordinate-min, synthetic)");
}

// ---------------------------------------------------------------------------

int run_gen_data(Invocation& inv) {
  auto& c = inv.config;
  const auto T = c.get_int("T");
  const auto seed = static_cast<std::uint64_t>(c.contains("seed") ? c.get_int("seed") : 0);
  const auto task_name = c.get_or("task", "synthetic");
  RetrievalTask task;
  if (task_name == "synthetic") task = make_synthetic_task(seed, T);
  else if (task_name == "toy") task = make_toy_task(T);
  else throw InvalidInput("gen-data: unknown task '" + task_name + "' (synthetic, toy)");
  const auto data = sample_dataset(task, static_cast<std::size_t>(c.get_int("n_train")),
                                   static_cast<std::size_t>(c.get_int("n_val")), seed);
  fs::create_directories(inv.out);
  std::ofstream out(inv.out / "dataset.jsonl");
  if (!out) throw std::runtime_error("cannot write dataset.jsonl");
  write_dataset_jsonl(data, out);
  manifest(inv, {"dataset.jsonl"});
  return 0;
}

int run_train(Invocation& inv) {
  // Single-run keys map onto one-element grid lists.
  KeyValueConfig grid_config;
  std::optional<fs::path> data_path;
  for (const auto& [key, value] : inv.config.values()) {
    if (key == "T") grid_config.set("lengths", value);
    else if (key == "N") grid_config.set("hidden", value);
    else if (key == "seed") grid_config.set("seeds", value);
    else if (key == "data") data_path = value;
    else grid_config.set(key, value);
  }
  const auto spec = grid_spec_from_config(grid_config);
  if (spec.cells() != 1) throw InvalidInput("train: exactly one (h, T, N, seed) is needed, got " +
                                            std::to_string(spec.cells()) + " cells");
  Dataset data;
  if (data_path) {
    std::ifstream in(*data_path);
    if (!in) throw InvalidInput("train: cannot read dataset " + data_path->string());
    data = read_dataset_jsonl(in);
  } else {
    data = grid_dataset(spec, spec.lengths[0]);
  }
  ModelConfig mc;
  mc.heads = spec.heads[0];
  mc.length = data.meta.length;
  mc.hidden = spec.hidden[0];
  mc.head_dim = spec.head_dim;
  mc.input_dim = data.meta.dim;
  mc.beta = spec.beta;
  auto result = train(mc, data, spec.seeds[0], spec.train);
  result.record.experiment = spec.experiment;
  write_text(inv.out / "checkpoint.json", checkpoint_to_json(result.params));
  write_text(inv.out / "record.json", run_record_to_json(result.record));
  manifest(inv, {"checkpoint.json", "record.json"});
  std::cout << run_record_to_json(result.record) << '\n';
  return result.record.status == RunStatus::Ok ? 0 : kExitFailure;
}

int run_grid_command(Invocation& inv) {
  const auto spec = grid_spec_from_config(inv.config);
  const auto results = inv.out / "results.jsonl";
  GridOptions opts;
  opts.threads = inv.threads;
  opts.progress = [](const RunRecord& r, std::size_t done, std::size_t total) {
    std::cerr << "[" << done << "/" << total << "] h=" << r.heads << " T=" << r.length << " N=" << r.hidden
              << " seed=" << r.seed << " val_nmse=" << r.val_nmse << " (" << r.wall_seconds << "s)\n";
  };
  run_grid(spec, results, opts);
  const auto summary = min_over_seeds(read_results(results));
  std::ofstream csv(inv.out / "summary.csv");
  if (!csv) throw std::runtime_error("cannot write summary.csv");
  write_summary_csv(summary, csv);
  manifest(inv, {"results.jsonl", "summary.csv"});
  return 0;
}

int run_construct(Invocation& inv) {
  auto& c = inv.config;
  const auto kind = c.get_or("construction", "softmin");
  const double eps = c.contains("eps") ? c.get_double("eps") : 0.05;
  json j;
  j["construction"] = kind;
  j["eps"] = eps;
  if (kind == "relu-max") {
    const auto net = build_relu_max(c.get_int("T"), eps);
    j["T"] = net.length;
    j["resolution"] = net.resolution;
    j["net"] = net_json(net.net);
  } else if (kind == "softmin") {
    const auto task = construction_task(c);
    SoftminOptions opt;
    if (c.contains("beta")) opt.beta = c.get_double("beta");
    const auto m = build_softmin_model(task, eps, opt);
    for (const auto& w : m.warnings) std::cerr << "warning: " << w << '\n';
    j["task"] = task.name;
    j["T"] = m.length;
    j["heads"] = m.heads;
    j["embed_dim"] = m.embed_dim();
    j["beta"] = m.beta;
    j["achieved_bound"] = m.achieved_bound;
    j["component_delta"] = m.component_delta;
    j["outer_delta"] = m.outer_delta;
    std::vector<double> bounds;
    for (Eigen::Index i = 0; i < m.heads; ++i) bounds.push_back(m.softmin_bound(i));
    j["softmin_bounds"] = bounds;
    j["max_attention_entry"] = m.max_attention_entry();
    j["ffn"] = net_json(m.ffn);
    j["warnings"] = m.warnings;
    j["cls"] = matrix_json(m.cls.transpose());
    j["w_o"] = matrix_json(m.w_o);
    for (Eigen::Index i = 0; i < m.heads; ++i) {
      const auto k = static_cast<std::size_t>(i);
      j["heads_detail"].push_back({{"w_q", matrix_json(m.w_q[k])}, {"w_k", matrix_json(m.w_k[k])},
                                   {"w_v", matrix_json(m.w_v[k])}, {"index_set", m.index_sets[k]}});
    }
  } else if (kind == "memorization") {
    const auto task = construction_task(c);
    const auto m = build_memorization_model(task, eps);
    j["task"] = task.name;
    j["T"] = m.length;
    j["embed_dim"] = m.embed;
    j["resolution"] = m.resolution;
    j["achieved_bound"] = m.achieved_bound;
    j["ffn"] = net_json(m.ffn);
    j["f1"] = net_json(m.f1);
    j["f2"] = net_json(m.f2);
    j["f3"] = net_json(m.f3);
  } else {
    throw InvalidInput("construct: unknown construction '" + kind + "' (softmin, memorization, relu-max)");
  }
  write_text(inv.out / "construction.json", j.dump(2));
  manifest(inv, {"construction.json"});
  std::cout << j.dump() << '\n';
  return 0;
}

int run_verify(Invocation& inv) {
  auto& c = inv.config;
  const auto kind = c.get("construction");
  const auto samples = static_cast<std::size_t>(c.contains("samples") ? c.get_int("samples") : 10000);
  const auto seed = static_cast<std::uint64_t>(c.contains("seed") ? c.get_int("seed") : 0);
  auto T = [&] { return c.get_int("T"); };
  VerifyReport r;
  if (kind == "relu-max") r = verify_relu_max(T(), c.get_double("eps"), samples, seed);
  else if (kind == "softmin")
    r = verify_softmin(c.contains("D") ? c.get_int("D") : 1, T(), c.contains("beta") ? c.get_double("beta") : 10.0,
                       samples, seed);
  else if (kind == "memorization") r = verify_memorization(T(), c.get_double("eps"), samples, seed);
  else if (kind == "stacking") r = verify_stacking(samples, seed);
  else if (kind == "selector") r = verify_selector(T(), c.contains("d") ? c.get_int("d") : 2, samples, seed);
  else throw InvalidInput("verify: unknown construction '" + kind +
                          "' (relu-max, softmin, memorization, stacking, selector)");
  const auto file = "verify-" + kind + ".json";
  write_text(inv.out / file, verify_report_json(r));
  manifest(inv, {file});
  std::cout << kind << ": " << (r.ok() ? "ok" : "VIOLATED") << " max_observed=" << r.max_observed
            << " bound=" << r.bound << " samples=" << r.samples << " violations=" << r.violations << '\n';
  return r.ok() ? 0 : kExitFailure;
}

int run_analyze(Invocation& inv) {
  auto& c = inv.config;
  const fs::path input = c.get("input");
  ErrGrid grid;
  if (input.extension() == ".csv") {
    std::ifstream in(input);
    if (!in) throw InvalidInput("analyze: cannot read " + input.string());
    grid = read_err_grid_csv(in);
  } else {
    const auto records = read_results(input);
    if (records.empty()) throw InvalidInput("analyze: no records in " + input.string());
    grid = err_grid_from_summary(min_over_seeds(records));
  }
  std::vector<Eigen::Index> drop;
  if (c.contains("drop") && !c.get("drop").empty())
    for (auto h : c.get_int_list("drop")) drop.push_back(h);
  TransitionOptions topt;
  if (c.contains("drop_factor")) topt.drop_factor = c.get_double("drop_factor");
  if (c.contains("max_log_slope")) topt.max_log_slope = c.get_double("max_log_slope");
  const auto text = write_analysis(grid, drop, inv.out, topt);
  manifest(inv, {"report.json", "nmse_vs_h.csv", "log_n_vs_log_nmse.csv", "reversal_vs_h.csv"});
  std::cout << text << '\n';
  return 0;
}

int run_collide(Invocation& inv) {
  auto& c = inv.config;
  const auto T = c.get_int("T");
  const auto h = c.contains("heads") ? c.get_int("heads") : 1;
  const auto task = make_toy_task(T);
  SoftminOptions sopt;
  sopt.beta = c.contains("beta") ? c.get_double("beta") : 700.0;
  sopt.enforce_epsilon = false;
  // h = 1 attends to the min component only; h = 2 is the full model.
  std::optional<SoftminHeadModel> model;
  if (h == 1) model = build_softmin_model(restrict_components(task, {1}), 1.0, sopt);
  else if (h == 2) model = build_softmin_model(task, 1.0, sopt);
  else throw InvalidInput("collide: heads must be 1 or 2 for the toy task");
  CollisionOptions opt;
  opt.heads = h;
  opt.require_head_deficit = h < task.intrinsic_dimension();
  if (c.contains("budget")) opt.budget = static_cast<std::size_t>(c.get_int("budget"));
  if (c.contains("window")) opt.window = c.get_int("window");
  if (c.contains("grid")) opt.grid = c.get_int("grid");
  if (c.contains("min_gap")) opt.min_gap = c.get_double("min_gap");
  if (c.contains("seed")) opt.seed = static_cast<std::uint64_t>(c.get_int("seed"));
  const auto res = find_attention_collision([&](const Sequence& x) { return model->post_attention(x); }, task, opt);
  json j{{"h", h},
         {"T", T},
         {"beta", model->beta},
         {"found", res.found},
         {"distance", res.distance},
         {"gap", res.gap},
         {"ratio", std::isfinite(res.ratio) ? json(res.ratio) : json("inf")},
         {"implied_width", res.implied_width ? json(*res.implied_width) : json(nullptr)},
         {"evaluations", res.evaluations}};
  if (res.found) {
    j["first"] = matrix_json(res.first.tokens.transpose());
    j["second"] = matrix_json(res.second.tokens.transpose());
  }
  write_text(inv.out / "collision.json", j.dump(2));
  manifest(inv, {"collision.json"});
  std::cout << j.dump() << '\n';
  return 0;
}

const std::vector<SubcommandSpec>& subcommands() {
  static const std::vector<SubcommandSpec> specs = {
      {"gen-data", "Sample a JSON-lines dataset", true, {"task", "T", "n_train", "n_val", "seed"}, run_gen_data},
      {"train", "Train one model and write a checkpoint", true,
       {"heads", "T", "N", "seed", "data", "epochs", "batch_size", "learning_rate"}, run_train},
      {"grid", "Train every (h, T, N, seed) cell, resuming finished ones", true,
       {"experiment", "heads", "lengths", "seeds", "hidden", "epochs"}, run_grid_command},
      {"construct", "Build a constructive approximator and describe it", false,
       {"construction", "task", "T", "D", "eps", "beta", "data_seed"}, run_construct},
      {"verify", "Randomized check of a construction's error bound", false,
       {"construction", "T", "D", "d", "eps", "beta", "samples", "seed"}, run_verify},
      {"analyze", "Phase transition, reversal and scaling-law fit of results", false,
       {"input", "drop", "drop_factor", "max_log_slope"}, run_analyze},
      {"collide", "Search for a post-attention collision on the toy task", false,
       {"T", "heads", "beta", "budget", "window", "grid", "min_gap", "seed"}, run_collide},
  };
  return specs;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"headlab: multi-head attention retrieval experiments"};
  app.require_subcommand(1);
  std::string config_path;
  std::string out_dir;
  std::size_t threads = std::max(1U, std::thread::hardware_concurrency());
  std::vector<std::string> positional;

  struct Bound {
    const SubcommandSpec* spec;
    CLI::App* app;
    std::map<std::string, std::string> flags;
  };
  std::vector<Bound> bound;
  bound.reserve(subcommands().size());
  for (const auto& spec : subcommands()) {
    auto* sub = app.add_subcommand(spec.name, spec.help);
    bound.push_back({&spec, sub, {}});
    auto& b = bound.back();
    sub->add_option("--config,-c", config_path, "key = value config file")->check(CLI::ExistingFile);
    sub->add_option("--out,-o", out_dir, "output directory (default $HEADLAB_OUT, then ./out)");
    sub->add_option("--threads", threads, "worker threads for grid")->check(CLI::PositiveNumber);
    for (const auto& flag : spec.flags) sub->add_option("--" + flag, b.flags[flag], "sets config key " + flag);
    sub->add_option("overrides", positional, "key=value overrides");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << app.help() << '\n';
    error_line("usage", e.what());
    return kExitUsage;
  }

  const Bound* active = nullptr;
  for (const auto& b : bound)
    if (b.app->parsed()) active = &b;

  Invocation inv;
  inv.name = active->spec->name;
  inv.threads = threads;
  try {
    if (config_path.empty() && active->spec->needs_config)
      throw UsageError(inv.name + " needs --config <file>");
    if (!config_path.empty()) inv.config = KeyValueConfig::load(config_path);
    for (const auto& flag : active->spec->flags) {
      if (active->app->count("--" + flag) == 0) continue;
      const auto assignment = flag + "=" + active->flags.at(flag);
      inv.config.apply_override(assignment);
      inv.overrides.push_back(assignment);
    }
    for (const auto& assignment : positional) {
      inv.config.apply_override(assignment);
      inv.overrides.push_back(assignment);
    }
  } catch (const UsageError& e) {
    std::cerr << active->app->help() << '\n';
    error_line("usage", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    error_line("usage", e.what());
    return kExitUsage;
  }

  if (!out_dir.empty()) inv.out = out_dir;
  else if (const char* env = std::getenv("HEADLAB_OUT"); env && *env) inv.out = env;
  else inv.out = "out";

  try {
    return active->spec->run(inv);
  } catch (const InvalidInput& e) {
    error_line("invalid_input", e.what());
  } catch (const ConstructionError& e) {
    error_line("construction", e.what());
  } catch (const std::exception& e) {
    error_line("runtime", e.what());
  }
  return kExitFailure;
}
