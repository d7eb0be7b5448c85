#include "headlab/harness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "headlab/errors.hpp"

#ifndef HEADLAB_VERSION
#define HEADLAB_VERSION "unknown"
#endif

namespace headlab {

using json = nlohmann::json;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) throw InvalidInput("config: cannot parse '" + text + "' for key '" + key + "'");
  return value;
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

json nullable(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double from_nullable(const json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(std::istream& in) {
  KeyValueConfig c;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw InvalidInput("config line " + std::to_string(number) + ": expected key = value");
    const auto key = trim(line.substr(0, eq));
    if (key.empty()) throw InvalidInput("config line " + std::to_string(number) + ": empty key");
    c.values_[key] = trim(line.substr(eq + 1));
  }
  return c;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open config file " + path.string());
  return parse(in);
}

void KeyValueConfig::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || trim(assignment.substr(0, eq)).empty())
    throw InvalidInput("override '" + assignment + "' is not key=value");
  values_[trim(assignment.substr(0, eq))] = trim(assignment.substr(eq + 1));
}

const std::string& KeyValueConfig::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw InvalidInput("config: missing key '" + key + "'");
  return it->second;
}

std::string KeyValueConfig::get_or(const std::string& key, const std::string& fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double KeyValueConfig::get_double(const std::string& key) const { return parse_number<double>(key, get(key)); }

std::int64_t KeyValueConfig::get_int(const std::string& key) const {
  return parse_number<std::int64_t>(key, get(key));
}

bool KeyValueConfig::get_bool(const std::string& key) const {
  const auto& v = get(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw InvalidInput("config: '" + v + "' is not a boolean for key '" + key + "'");
}

std::vector<std::int64_t> KeyValueConfig::get_int_list(const std::string& key) const {
  std::vector<std::int64_t> out;
  for (const auto& item : split_list(get(key))) out.push_back(parse_number<std::int64_t>(key, item));
  return out;
}

std::string KeyValueConfig::canonical() const {
  std::string s;
  for (const auto& [k, v] : values_) s += k + " = " + v + "\n";
  return s;
}

std::string KeyValueConfig::hash() const {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << fnv1a(canonical());
  return os.str();
}

void GridSpec::validate() const {
  if (heads.empty() || lengths.empty() || seeds.empty() || hidden.empty())
    throw InvalidInput("grid: head, length, seed and hidden lists must be nonempty");
  auto positive = [](const auto& v) { return std::all_of(v.begin(), v.end(), [](auto x) { return x > 0; }); };
  if (!positive(heads) || !positive(lengths) || !positive(hidden)) throw InvalidInput("grid: sizes must be positive");
  if (head_dim <= 0 || n_train == 0 || n_val == 0 || train.batch_size == 0 || train.epochs == 0)
    throw InvalidInput("grid: head_dim, sample counts, batch size and epochs must be positive");
  if (!(train.learning_rate > 0.0) || !(beta > 0.0)) throw InvalidInput("grid: learning rate and beta must be positive");
}

GridSpec grid_spec_from_config(const KeyValueConfig& config) {
  static const std::set<std::string> known{
      "experiment", "heads",     "lengths",       "seeds",       "hidden",          "head_dim",
      "beta",       "n_train",   "n_val",         "data_seed",   "epochs",          "batch_size",
      "learning_rate", "cosine_decay", "final_lr_fraction", "divergence_threshold"};
  for (const auto& [k, v] : config.values())
    if (!known.contains(k)) throw InvalidInput("config: unknown key '" + k + "'");
  GridSpec s;
  auto to_index = [](const std::vector<std::int64_t>& v) { return std::vector<Eigen::Index>(v.begin(), v.end()); };
  s.experiment = config.get_or("experiment", s.experiment);
  if (config.contains("heads")) s.heads = to_index(config.get_int_list("heads"));
  if (config.contains("lengths")) s.lengths = to_index(config.get_int_list("lengths"));
  if (config.contains("hidden")) s.hidden = to_index(config.get_int_list("hidden"));
  if (config.contains("seeds")) {
    s.seeds.clear();
    for (auto v : config.get_int_list("seeds")) {
      if (v < 0) throw InvalidInput("config: seeds must be non-negative");
      s.seeds.push_back(static_cast<std::uint64_t>(v));
    }
  }
  if (config.contains("head_dim")) s.head_dim = config.get_int("head_dim");
  if (config.contains("beta")) s.beta = config.get_double("beta");
  if (config.contains("n_train")) s.n_train = static_cast<std::size_t>(std::max<std::int64_t>(0, config.get_int("n_train")));
  if (config.contains("n_val")) s.n_val = static_cast<std::size_t>(std::max<std::int64_t>(0, config.get_int("n_val")));
  if (config.contains("data_seed")) s.data_seed = static_cast<std::uint64_t>(config.get_int("data_seed"));
  if (config.contains("epochs")) s.train.epochs = static_cast<std::size_t>(std::max<std::int64_t>(0, config.get_int("epochs")));
  if (config.contains("batch_size"))
    s.train.batch_size = static_cast<std::size_t>(std::max<std::int64_t>(0, config.get_int("batch_size")));
  if (config.contains("learning_rate")) s.train.learning_rate = config.get_double("learning_rate");
  if (config.contains("cosine_decay")) s.train.cosine_decay = config.get_bool("cosine_decay");
  if (config.contains("final_lr_fraction")) s.train.final_lr_fraction = config.get_double("final_lr_fraction");
  if (config.contains("divergence_threshold")) s.train.divergence_threshold = config.get_double("divergence_threshold");
  s.validate();
  return s;
}

CellKey cell_key(const RunRecord& r) { return {r.heads, r.length, r.hidden, r.seed}; }

std::string run_record_to_json(const RunRecord& r) {
  json j = {{"experiment", r.experiment},
            {"h", r.heads},
            {"T", r.length},
            {"N", r.hidden},
            {"seed", r.seed},
            {"parameter_count", r.parameter_count},
            {"train_nmse", nullable(r.train_nmse)},
            {"val_nmse", nullable(r.val_nmse)},
            {"epochs_completed", r.epochs_completed},
            {"epochs", r.epochs},
            {"batch_size", r.batch_size},
            {"learning_rate", r.learning_rate},
            {"wall_seconds", r.wall_seconds},
            {"status", to_string(r.status)}};
  return j.dump();
}

RunRecord run_record_from_json(const std::string& line) {
  const auto j = json::parse(line);
  RunRecord r;
  r.experiment = j.at("experiment").get<std::string>();
  r.heads = j.at("h").get<Eigen::Index>();
  r.length = j.at("T").get<Eigen::Index>();
  r.hidden = j.at("N").get<Eigen::Index>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.parameter_count = j.at("parameter_count").get<std::size_t>();
  r.train_nmse = from_nullable(j.at("train_nmse"));
  r.val_nmse = from_nullable(j.at("val_nmse"));
  r.epochs_completed = j.at("epochs_completed").get<std::size_t>();
  r.epochs = j.at("epochs").get<std::size_t>();
  r.batch_size = j.at("batch_size").get<std::size_t>();
  r.learning_rate = j.at("learning_rate").get<double>();
  r.wall_seconds = j.at("wall_seconds").get<double>();
  r.status = run_status_from_string(j.at("status").get<std::string>());
  if (r.status == RunStatus::Ok && !(r.val_nmse >= 0.0)) throw InvalidInput("results: ok run without a valid NMSE");
  return r;
}

std::vector<RunRecord> read_results(const std::filesystem::path& path) {
  std::vector<RunRecord> out;
  std::ifstream in(path);
  if (!in) return out;
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(in, line))
    if (!trim(line).empty()) lines.push_back(line);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    try {
      out.push_back(run_record_from_json(lines[i]));
    } catch (const json::exception&) {
      if (i + 1 != lines.size()) throw InvalidInput("results: corrupt line " + std::to_string(i + 1) + " in " + path.string());
    }
  }
  return out;
}

Dataset grid_dataset(const GridSpec& spec, Eigen::Index length) {
  const auto task = make_synthetic_task(spec.data_seed, length);
  return sample_dataset(task, spec.n_train, spec.n_val, spec.data_seed);
}

namespace {

// Cut an interrupted final line so the next append starts on a fresh line.
void drop_torn_tail(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return;
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  in.close();
  if (text.empty() || text.back() == '\n') return;
  const auto last = text.find_last_of('\n');
  std::filesystem::resize_file(path, last == std::string::npos ? 0 : last + 1);
}

}  // namespace

std::vector<RunRecord> run_grid(const GridSpec& spec, const std::filesystem::path& results_path,
                                const GridOptions& options) {
  spec.validate();
  drop_torn_tail(results_path);
  std::set<CellKey> done;
  for (const auto& r : read_results(results_path)) done.insert(cell_key(r));

  std::vector<CellKey> todo;
  for (auto T : spec.lengths)
    for (auto h : spec.heads)
      for (auto N : spec.hidden)
        for (auto seed : spec.seeds)
          if (!done.contains({h, T, N, seed})) todo.emplace_back(h, T, N, seed);
  if (todo.empty()) return {};
  // long cells first so the pool drains evenly
  std::stable_sort(todo.begin(), todo.end(), [](const CellKey& a, const CellKey& b) {
    return std::get<1>(a) * std::get<0>(a) > std::get<1>(b) * std::get<0>(b);
  });

  std::map<Eigen::Index, Dataset> datasets;
  for (const auto& key : todo)
    if (!datasets.contains(std::get<1>(key))) datasets.emplace(std::get<1>(key), grid_dataset(spec, std::get<1>(key)));

  if (results_path.has_parent_path()) std::filesystem::create_directories(results_path.parent_path());
  std::ofstream out(results_path, std::ios::app);
  if (!out) throw std::runtime_error("cannot open results file " + results_path.string());

  std::mutex writer;
  std::vector<RunRecord> finished;
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  auto worker = [&] {
    for (;;) {
      const auto i = next.fetch_add(1);
      if (i >= todo.size()) return;
      {
        std::lock_guard lock(writer);
        if (failure) return;
      }
      try {
        const auto [h, T, N, seed] = todo[i];
        ModelConfig config;
        config.heads = h;
        config.length = T;
        config.hidden = N;
        config.head_dim = spec.head_dim;
        config.input_dim = datasets.at(T).meta.dim;
        config.beta = spec.beta;
        auto result = train(config, datasets.at(T), seed, spec.train);
        result.record.experiment = spec.experiment;
        std::lock_guard lock(writer);
        out << run_record_to_json(result.record) << '\n';
        out.flush();
        if (!out) throw std::runtime_error("write to " + results_path.string() + " failed");
        finished.push_back(result.record);
        if (options.progress) options.progress(result.record, finished.size(), todo.size());
      } catch (...) {
        std::lock_guard lock(writer);
        if (!failure) failure = std::current_exception();
        return;
      }
    }
  };
  const std::size_t n_threads = std::max<std::size_t>(1, std::min(options.threads, todo.size()));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);
  return finished;
}

std::map<SummaryKey, SeedSummary> min_over_seeds(const std::vector<RunRecord>& records) {
  if (records.empty()) throw InvalidInput("min_over_seeds: no records");
  std::map<SummaryKey, std::vector<double>> ok;
  std::map<SummaryKey, SeedSummary> out;
  for (const auto& r : records) {
    const SummaryKey key{r.heads, r.length, r.hidden};
    ++out[key].runs;
    if (r.status == RunStatus::Ok && std::isfinite(r.val_nmse)) ok[key].push_back(r.val_nmse);
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (auto& [key, s] : out) {
    const auto& v = ok[key];
    s.ok_runs = v.size();
    if (v.empty()) {
      s.min_nmse = s.mean_nmse = s.std_nmse = nan;
      continue;
    }
    s.min_nmse = *std::min_element(v.begin(), v.end());
    double sum = 0.0;
    for (double x : v) sum += x;
    s.mean_nmse = sum / static_cast<double>(v.size());
    if (v.size() < 2) {
      s.std_nmse = nan;
    } else {
      double ss = 0.0;
      for (double x : v) ss += (x - s.mean_nmse) * (x - s.mean_nmse);
      s.std_nmse = std::sqrt(ss / static_cast<double>(v.size() - 1));
    }
  }
  return out;
}

void write_summary_csv(const std::map<SummaryKey, SeedSummary>& summary, std::ostream& out) {
  out << "h,T,N,min_nmse,mean_nmse,std_nmse\n";
  auto field = [](double v) {
    if (!std::isfinite(v)) return std::string("nan");
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
  };
  for (const auto& [key, s] : summary)
    out << std::get<0>(key) << ',' << std::get<1>(key) << ',' << std::get<2>(key) << ',' << field(s.min_nmse) << ','
        << field(s.mean_nmse) << ',' << field(s.std_nmse) << '\n';
}

std::string version_string() { return HEADLAB_VERSION; }

void write_manifest(const std::filesystem::path& path, const std::string& command, const KeyValueConfig& config,
                    const std::vector<std::string>& overrides, const std::vector<std::string>& outputs) {
  json j;
  j["command"] = command;
  j["version"] = version_string();
  j["config_hash"] = config.hash();
  j["config"] = config.values();
  j["overrides"] = overrides;
  j["seeds"] = config.get_or("seeds", config.get_or("seed", ""));
  j["outputs"] = outputs;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write manifest " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace headlab
