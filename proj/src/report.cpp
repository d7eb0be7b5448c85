#include "headlab/report.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include <json.hpp>

#include "headlab/errors.hpp"

namespace headlab {

using json = nlohmann::json;

ErrGrid err_grid_from_summary(const std::map<SummaryKey, SeedSummary>& summary) {
  ErrGrid g;
  for (const auto& [key, s] : summary)
    if (!s.flagged()) g[key] = s.min_nmse;
  return g;
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
    out.push_back(cell);
  }
  return out;
}

std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream out(p);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << std::setprecision(17);
  return out;
}

}  // namespace

ErrGrid read_err_grid_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw InvalidInput("err csv: empty input");
  const auto header = split_csv(line);
  auto find = [&](const std::string& name) -> long {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return static_cast<long>(i);
    return -1;
  };
  const long ih = find("h"), it = find("T"), in_ = find("N");
  long iv = -1;
  for (const char* name : {"min_nmse", "err", "nmse"})
    if (iv < 0) iv = find(name);
  if (ih < 0 || it < 0 || iv < 0) throw InvalidInput("err csv: header needs h, T and a min_nmse/err/nmse column");
  ErrGrid g;
  int number = 1;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \r\t") == std::string::npos) continue;
    const auto cells = split_csv(line);
    if (static_cast<long>(cells.size()) != static_cast<long>(header.size()))
      throw InvalidInput("err csv: wrong field count on line " + std::to_string(number));
    try {
      const auto h = std::stol(cells[static_cast<std::size_t>(ih)]);
      const auto T = std::stol(cells[static_cast<std::size_t>(it)]);
      const auto N = in_ >= 0 ? std::stol(cells[static_cast<std::size_t>(in_)]) : 0L;
      const double v = std::stod(cells[static_cast<std::size_t>(iv)]);
      if (std::isfinite(v)) g[{h, T, N}] = v;
    } catch (const std::logic_error&) {
      throw InvalidInput("err csv: unparsable value on line " + std::to_string(number));
    }
  }
  if (g.empty()) throw InvalidInput("err csv: no rows");
  return g;
}

ErrTable err_table(const ErrGrid& grid, Eigen::Index hidden) {
  ErrTable t;
  for (const auto& [key, v] : grid)
    if (std::get<2>(key) == hidden) t[{std::get<0>(key), std::get<1>(key)}] = v;
  return t;
}

std::string write_analysis(const ErrGrid& grid, const std::vector<Eigen::Index>& drop,
                           const std::filesystem::path& out_dir, const TransitionOptions& options) {
  if (grid.empty()) throw InvalidInput("write_analysis: empty table");
  std::filesystem::create_directories(out_dir);
  std::set<Eigen::Index> widths;
  for (const auto& [key, v] : grid) widths.insert(std::get<2>(key));

  auto nmse_csv = open_out(out_dir / "nmse_vs_h.csv");
  auto logn_csv = open_out(out_dir / "log_n_vs_log_nmse.csv");
  auto rev_csv = open_out(out_dir / "reversal_vs_h.csv");
  nmse_csv << "N,h,T,nmse\n";
  logn_csv << "h,T,N,log_N,log_nmse\n";
  rev_csv << "N,h,reversal,degenerate\n";
  for (const auto& [key, v] : grid) {
    const auto [h, T, N] = key;
    nmse_csv << N << ',' << h << ',' << T << ',' << v << '\n';
    if (N > 0 && v > 0.0)
      logn_csv << h << ',' << T << ',' << N << ',' << std::log(static_cast<double>(N)) << ',' << std::log(v) << '\n';
  }

  json report;
  report["drop"] = drop;
  report["widths"] = json::array();
  for (auto N : widths) {
    const auto table = err_table(grid, N);
    json w;
    w["N"] = N;
    const auto d_hat = detect_transition(table, options);
    w["transition"] = d_hat ? json(*d_hat) : json(nullptr);
    std::set<Eigen::Index> heads;
    for (const auto& [key, v] : table) heads.insert(key.first);
    json rev = json::object();
    for (auto h : heads) {
      const auto r = row(table, h);
      if (r.size() < 2) continue;
      const auto score = weighted_reversal_score(r);
      rev[std::to_string(h)] = {{"score", score.score}, {"degenerate", score.degenerate}};
      rev_csv << N << ',' << h << ',' << score.score << ',' << (score.degenerate ? 1 : 0) << '\n';
    }
    w["reversal"] = rev;
    try {
      const auto fit = fit_scaling_law(table, drop);
      w["scaling_fit"] = {{"c", fit.c}, {"beta", fit.beta_exp}, {"alpha", fit.alpha}, {"delta", fit.delta},
                          {"objective", fit.objective}, {"dropped", fit.dropped}};
    } catch (const InvalidInput& e) {
      w["scaling_fit"] = {{"error", e.what()}};
    }
    report["widths"].push_back(std::move(w));
  }
  const auto text = report.dump(2);
  auto out = open_out(out_dir / "report.json");
  out << text << '\n';
  return text;
}

}  // namespace headlab
