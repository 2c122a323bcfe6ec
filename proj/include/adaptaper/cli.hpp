#pragma once

// Command-line front end: config files, flag overrides, CSV output and run manifests.
//
//   adaptaper <command> [--config FILE] [--out DIR] [--seed N] [--set section.key=value ...]
//
// Commands: taper-eval, select-ranges, krige, loglik, godambe, experiment.
// Exit codes: 0 success, 1 numerical failure, 2 configuration error.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <boost/program_options.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "adaptaper/covariance.hpp"
#include "adaptaper/errors.hpp"
#include "adaptaper/interp.hpp"
#include "adaptaper/kriging.hpp"
#include "adaptaper/likelihood.hpp"
#include "adaptaper/range_select.hpp"
#include "adaptaper/sim.hpp"
#include "adaptaper/tapers.hpp"

namespace adaptaper::cli {

inline constexpr const char* version = "0.1.0";

class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string key, const std::string& what) : std::runtime_error(key + ": " + what), key_(std::move(key)) {}
  [[nodiscard]] const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

// ---------------------------------------------------------------------------------------------
// CSV

[[nodiscard]] inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  [[nodiscard]] std::size_t column(const std::string& name) const {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw std::out_of_range("csv: no column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  }
  [[nodiscard]] double number(std::size_t row, const std::string& name) const {
    const std::string& cell = rows.at(row).at(column(name));
    char* end = nullptr;
    const double v = std::strtod(cell.c_str(), &end);
    if (cell.empty() || end != cell.c_str() + cell.size()) throw std::invalid_argument("csv: not a number: '" + cell + "'");
    return v;
  }
};

inline void write_csv(std::ostream& os, const CsvTable& t) {
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) os << (i ? "," : "") << cells[i];
    os << '\n';
  };
  line(t.header);
  for (const auto& r : t.rows) line(r);
}

// Reads the comma-separated tables written by write_csv (no quoting).
[[nodiscard]] inline CsvTable read_csv(std::istream& is) {
  CsvTable t;
  std::string text;
  bool first = true;
  while (std::getline(is, text)) {
    if (!text.empty() && text.back() == '\r') text.pop_back();
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ss(text);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!text.empty() && text.back() == ',') cells.emplace_back();
    if (first) {
      t.header = std::move(cells);
      first = false;
    } else {
      t.rows.push_back(std::move(cells));
    }
  }
  return t;
}

// ---------------------------------------------------------------------------------------------
// Configuration

[[nodiscard]] inline std::string sha256_hex(const std::string& text) {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), text.data(), text.size()) != 1 || EVP_DigestFinal_ex(ctx.get(), digest, &len) != 1) {
    throw std::runtime_error("sha256 failed");
  }
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return os.str();
}

// Flat section.key -> value map. Every key must be one of the documented keys.
class Config {
 public:
  static const std::set<std::string>& known_keys() {
    static const std::set<std::string> keys{
        "experiment.kind",   "scenario.name",  "scenario.n",        "scenario.per_side", "scenario.jitter",
        "scenario.grid",     "scenario.field_sigma", "scenario.field_kappa", "scenario.field_nu", "model.name",
        "model.sigma",       "model.nu",       "model.kappa",       "model.range",       "model.sigma2",
        "model.kappa1",      "model.kappa2",   "taper.names",       "taper.range",       "taper.epsilon",
        "taper.dimension",   "taper.blocks",   "run.seed",          "run.replicates",    "run.threads",
        "run.grid",          "run.alpha_grid", "run.alpha",         "run.density",       "run.block",
        "run.replicate"};
    return keys;
  }

  static Config load(const std::string& path) {
    boost::property_tree::ptree tree;
    try {
      boost::property_tree::ini_parser::read_ini(path, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
      throw ConfigError("config", e.what());
    }
    Config c;
    for (const auto& [section, body] : tree) {
      if (body.empty()) {
        c.set(section, body.data());
        continue;
      }
      for (const auto& [key, value] : body) c.set(section + "." + key, value.data());
    }
    return c;
  }

  void set(const std::string& key, const std::string& value) {
    if (!known_keys().count(key)) throw ConfigError(key, "unknown configuration key");
    values_[key] = value;
  }

  [[nodiscard]] bool has(const std::string& key) const { return values_.count(key) > 0; }

  [[nodiscard]] std::string text(const std::string& key, const std::string& fallback) const {
    const auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  [[nodiscard]] double number(const std::string& key, double fallback) const {
    if (!has(key)) return fallback;
    const std::string& s = values_.at(key);
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (s.empty() || end != s.c_str() + s.size() || !std::isfinite(v)) throw ConfigError(key, "expected a number, got '" + s + "'");
    return v;
  }

  [[nodiscard]] long long integer(const std::string& key, long long fallback) const {
    if (!has(key)) return fallback;
    const std::string& s = values_.at(key);
    char* end = nullptr;
    const long long v = std::strtoll(s.c_str(), &end, 10);
    if (s.empty() || end != s.c_str() + s.size()) throw ConfigError(key, "expected an integer, got '" + s + "'");
    return v;
  }

  [[nodiscard]] bool boolean(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const std::string& s = values_.at(key);
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    throw ConfigError(key, "expected true or false, got '" + s + "'");
  }

  // Sorted key=value lines; the config hash is taken over this text.
  [[nodiscard]] std::string canonical() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
    return out;
  }

  [[nodiscard]] std::string hash() const { return sha256_hex(canonical()); }
  [[nodiscard]] const std::map<std::string, std::string>& values() const noexcept { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

[[nodiscard]] inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream ss(s);
  while (std::getline(ss, item, sep)) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// "a:step:b" or a comma-separated list.
[[nodiscard]] inline std::vector<double> parse_alpha_grid(const std::string& key, const std::string& s) {
  auto num = [&](const std::string& t) {
    char* end = nullptr;
    const double v = std::strtod(t.c_str(), &end);
    if (t.empty() || end != t.c_str() + t.size()) throw ConfigError(key, "bad number '" + t + "'");
    return v;
  };
  std::vector<double> out;
  const auto range = split(s, ':');
  if (range.size() == 3) {
    const double a = num(range[0]), step = num(range[1]), b = num(range[2]);
    if (!(step > 0.0) || b < a) throw ConfigError(key, "range must be start:step:stop with step > 0");
    const auto count = static_cast<long long>(std::floor((b - a) / step + 1e-9));
    for (long long k = 0; k <= count; ++k) out.push_back(std::round((a + k * step) * 1e12) / 1e12);
  } else if (s.find(':') == std::string::npos) {
    for (const auto& t : split(s, ',')) out.push_back(num(t));
  } else {
    throw ConfigError(key, "range must be start:step:stop");
  }
  if (out.empty()) throw ConfigError(key, "empty alpha grid");
  for (double a : out) {
    if (!(a >= 0.0 && a <= 1.0)) throw ConfigError(key, "alpha values must lie in [0, 1]");
  }
  return out;
}

[[nodiscard]] inline unsigned default_threads() {
  if (const char* env = std::getenv("ADAPTAPER_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0) return static_cast<unsigned>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

[[nodiscard]] inline Scenario scenario_from(const Config& c) {
  const std::string name = c.text("scenario.name", "structured");
  if (name == "structured") {
    PerturbedGrid g;
    g.per_side = static_cast<int>(c.integer("scenario.per_side", g.per_side));
    g.jitter = c.number("scenario.jitter", g.jitter);
    if (g.per_side < 1) throw ConfigError("scenario.per_side", "must be positive");
    if (!(g.jitter >= 0.0 && g.jitter <= 0.5)) throw ConfigError("scenario.jitter", "must lie in [0, 0.5]");
    return g;
  }
  const long long n = c.integer("scenario.n", 1024);
  if (n < 1) throw ConfigError("scenario.n", "must be positive");
  if (name == "random") return UniformRandom{static_cast<std::size_t>(n)};
  if (name == "clustered") {
    ClusteredLGCP s;
    s.n = static_cast<std::size_t>(n);
    s.grid = static_cast<int>(c.integer("scenario.grid", s.grid));
    s.field.sigma = c.number("scenario.field_sigma", s.field.sigma);
    s.field.kappa = c.number("scenario.field_kappa", s.field.kappa);
    s.field.nu = c.number("scenario.field_nu", s.field.nu);
    if (s.grid < 2) throw ConfigError("scenario.grid", "must be at least 2");
    if (!(s.field.sigma > 0.0)) throw ConfigError("scenario.field_sigma", "must be positive");
    if (!(s.field.kappa > 0.0)) throw ConfigError("scenario.field_kappa", "must be positive");
    if (!(s.field.nu > 0.0)) throw ConfigError("scenario.field_nu", "must be positive");
    return s;
  }
  throw ConfigError("scenario.name", "unknown scenario '" + name + "' (structured, random, clustered)");
}

[[nodiscard]] inline CovarianceModel model_from(const Config& c) {
  const std::string name = c.text("model.name", "exponential");
  if (name == "exponential" || name == "matern") {
    MaternParams p;
    p.sigma = c.number("model.sigma", 1.0);
    p.nu = name == "exponential" ? 0.5 : c.number("model.nu", 0.5);
    if (name == "exponential" && c.has("model.nu") && c.number("model.nu", 0.5) != 0.5) {
      throw ConfigError("model.nu", "the exponential model has nu = 0.5");
    }
    if (!(p.sigma > 0.0)) throw ConfigError("model.sigma", "must be positive");
    if (!(p.nu > 0.0)) throw ConfigError("model.nu", "must be positive");
    if (c.has("model.kappa") && c.has("model.range")) throw ConfigError("model.range", "give either kappa or range");
    if (c.has("model.range")) {
      const double r = c.number("model.range", 0.0);
      if (!(r > 0.0)) throw ConfigError("model.range", "must be positive");
      p.kappa = kappa_for_range(p.nu, r);
    } else {
      p.kappa = c.number("model.kappa", kappa_for_range(p.nu, 0.1));
      if (!(p.kappa > 0.0)) throw ConfigError("model.kappa", "must be positive");
    }
    return p;
  }
  if (name == "nonstationary") {
    NonstatExpParams p;
    p.sigma2 = c.number("model.sigma2", 4.0);
    p.kappa1 = c.number("model.kappa1", -6.0);
    p.kappa2 = c.number("model.kappa2", 6.0);
    if (!(p.sigma2 > 0.0)) throw ConfigError("model.sigma2", "must be positive");
    return p;
  }
  throw ConfigError("model.name", "unknown model '" + name + "' (exponential, matern, nonstationary)");
}

[[nodiscard]] inline std::vector<std::string> tapers_from(const Config& c, const std::string& fallback) {
  auto names = split(c.text("taper.names", fallback), ',');
  if (names.empty()) throw ConfigError("taper.names", "no tapers given");
  for (const auto& n : names) {
    try {
      (void)parse_taper(n);
    } catch (const DomainError& e) {
      throw ConfigError("taper.names", e.what());
    }
  }
  return names;
}

[[nodiscard]] inline std::uint64_t seed_from(const Config& c) {
  if (!c.has("run.seed")) throw ConfigError("run.seed", "a seed is required");
  const long long s = c.integer("run.seed", 0);
  if (s < 0) throw ConfigError("run.seed", "must be non-negative");
  return static_cast<std::uint64_t>(s);
}

[[nodiscard]] inline double positive(const Config& c, const std::string& key, double fallback) {
  const double v = c.number(key, fallback);
  if (!(v > 0.0)) throw ConfigError(key, "must be positive");
  return v;
}

[[nodiscard]] inline double epsilon_from(const Config& c) {
  const double e = c.number("taper.epsilon", 0.01);
  if (!(e >= 0.0 && e < 1.0)) throw ConfigError("taper.epsilon", "must lie in [0, 1)");
  return e;
}

[[nodiscard]] inline KrigingExperimentConfig kriging_config(const Config& c, unsigned threads) {
  KrigingExperimentConfig k;
  k.scenario = scenario_from(c);
  const CovarianceModel m = model_from(c);
  if (!std::holds_alternative<MaternParams>(m)) throw ConfigError("model.name", "kriging needs a Matern model");
  k.model = std::get<MaternParams>(m);
  k.stationary_range = positive(c, "taper.range", 0.1);
  k.tapers = tapers_from(c, "W,T2h,T2,P1,P2");
  for (const auto& t : k.tapers) {
    if (t == "block") throw ConfigError("taper.names", "block taper is only available for likelihood commands");
  }
  k.replicates = static_cast<int>(c.integer("run.replicates", 20));
  if (k.replicates < 1) throw ConfigError("run.replicates", "must be at least 1");
  k.seed = seed_from(c);
  k.grid = static_cast<int>(c.integer("run.grid", 50));
  if (k.grid < 2) throw ConfigError("run.grid", "must be at least 2");
  k.epsilon = epsilon_from(c);
  k.threads = threads;
  return k;
}

[[nodiscard]] inline EstimationExperimentConfig estimation_config(const Config& c, unsigned threads) {
  EstimationExperimentConfig e;
  e.scenario = scenario_from(c);
  e.model = model_from(c);
  e.density = c.number("run.density", 0.01);
  if (!(e.density > 0.0 && e.density <= 1.0)) throw ConfigError("run.density", "must lie in (0, 1]");
  e.alpha_grid = parse_alpha_grid("run.alpha_grid", c.text("run.alpha_grid", "0:0.1:1"));
  e.dimension = static_cast<int>(c.integer("taper.dimension", 2));
  if (e.dimension < 1) throw ConfigError("taper.dimension", "must be positive");
  e.block = c.boolean("run.block", true);
  e.seed = seed_from(c);
  e.epsilon = epsilon_from(c);
  e.threads = threads;
  return e;
}

// ---------------------------------------------------------------------------------------------
// Output

class Output {
 public:
  Output(std::optional<std::filesystem::path> dir, std::ostream& out) : dir_(std::move(dir)), out_(out) {
    if (dir_) std::filesystem::create_directories(*dir_);
  }

  void table(const std::string& file, const CsvTable& t) {
    if (!dir_) {
      write_csv(out_, t);
      return;
    }
    const auto path = *dir_ / file;
    std::ofstream os(path, std::ios::binary);
    write_csv(os, t);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    files_.push_back(path.string());
  }

  void manifest(const std::string& command, const Config& c, const nlohmann::json& timings) {
    if (!dir_) return;
    nlohmann::json m;
    m["command"] = command;
    m["config_hash"] = c.hash();
    m["config"] = c.values();
    m["seed"] = c.has("run.seed") ? nlohmann::json(c.integer("run.seed", 0)) : nlohmann::json(nullptr);
    m["version"] = version;
    m["timings"] = timings;
    m["outputs"] = files_;
    std::ofstream os(*dir_ / "manifest.json", std::ios::binary);
    os << m.dump(2) << '\n';
  }

 private:
  std::optional<std::filesystem::path> dir_;
  std::ostream& out_;
  std::vector<std::string> files_;
};

[[nodiscard]] inline double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

// ---------------------------------------------------------------------------------------------
// Commands

struct Args {
  std::string command;
  Config config;
  std::optional<std::filesystem::path> out;
  unsigned threads = 1;
  std::optional<std::string> taper;
  std::optional<double> theta_s, theta_t, d;
};

inline int cmd_taper_eval(const Args& a, Output& out, std::ostream& console) {
  if (!a.taper) throw ConfigError("--taper", "required");
  if (!a.theta_s) throw ConfigError("--theta-s", "required");
  if (!a.theta_t) throw ConfigError("--theta-t", "required");
  if (!a.d) throw ConfigError("--d", "required");
  NamedTaper nt;
  try {
    nt = parse_taper(*a.taper);
  } catch (const DomainError& e) {
    throw ConfigError("--taper", e.what());
  }
  if (nt.kind.index() == 3) throw ConfigError("--taper", "block taper has no pointwise value");
  if (!(*a.theta_s > 0.0)) throw ConfigError("--theta-s", "must be positive");
  if (!(*a.theta_t > 0.0)) throw ConfigError("--theta-t", "must be positive");
  if (!(*a.d >= 0.0)) throw ConfigError("--d", "must be non-negative");
  const double v = nt.unit ? 1.0 : evaluate_taper(nt.kind, {0.0, 0.0}, {*a.d, 0.0}, *a.theta_s, *a.theta_t);
  CsvTable t{{"taper", "theta_s", "theta_t", "d", "value"},
             {{nt.name, format_double(*a.theta_s), format_double(*a.theta_t), format_double(*a.d), format_double(v)}}};
  if (a.out) {
    out.table("taper.csv", t);
  } else {
    console << format_double(v) << '\n';
  }
  return 0;
}

inline int cmd_select_ranges(const Args& a, Output& out) {
  const Config& c = a.config;
  const Scenario scenario = scenario_from(c);
  const std::uint64_t seed = seed_from(c);
  const double range = positive(c, "taper.range", 0.1);
  const double alpha = c.number("run.alpha", 1.0);
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("run.alpha", "must lie in [0, 1]");
  const auto names = tapers_from(c, "T2");
  const NamedTaper nt = parse_taper(names.front());
  if (nt.kind.index() == 3 || nt.unit) throw ConfigError("taper.names", "range selection needs a range-based taper");
  const SupportMetric metric = support_metric(nt.kind);

  Rng rng = stream(seed, 0);
  const PointSet points = gen_locations(scenario, rng);
  const std::vector<double> constant(points.size(), range);
  const auto stationary = row_nonzero_counts(points, constant, SupportMetric::euclidean);
  const long long total = total_nonzeros(stationary);
  const double theta_m = stationary_range_for_density(points, total, metric);
  const std::vector<double> theta_m_vec(points.size(), theta_m);
  const auto m_s = row_nonzero_counts(points, theta_m_vec, metric);
  const std::vector<double> ms(m_s.begin(), m_s.end());
  const RowTargets targets = blend_targets(ms, static_cast<double>(total_nonzeros(m_s)) / points.size(), alpha);
  SelectionParams params;
  params.epsilon = epsilon_from(c);
  params.metric = metric;
  params.seed = stream(seed, 0, 1)();
  const RangeSelection sel = theta_set_detailed(targets, theta_m_vec, points, params);

  CsvTable t{{"index", "x", "y", "target", "theta", "count", "stationary_count"}, {}};
  for (std::size_t i = 0; i < points.size(); ++i) {
    t.rows.push_back({std::to_string(i), format_double(points[i].x), format_double(points[i].y),
                      format_double(targets.m[i]), format_double(sel.theta[i]), std::to_string(sel.counts[i]),
                      std::to_string(m_s[i])});
  }
  out.table("ranges.csv", t);
  return 0;
}

inline int cmd_krige(const Args& a, Output& out) {
  const KrigingExperimentConfig k = kriging_config(a.config, a.threads);
  const auto rep = static_cast<std::size_t>(a.config.integer("run.replicate", 0));
  const std::vector<Point> grid = lattice(k.grid);
  Rng rng = stream(k.seed, rep);
  const PointSet obs = gen_locations(k.scenario, rng);
  const KrigingWorkspace ws = make_workspace(obs, grid, k.model);
  std::normal_distribution<double> normal;
  Eigen::VectorXd z(static_cast<Eigen::Index>(obs.size()));
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = normal(rng);
  KrigingProblem problem{obs, grid, k.model, ws.sigma00.matrixL() * z, std::nullopt};
  const KrigingResult optimal = krige_optimal(problem, ws);

  std::vector<KrigingResult> results;
  std::optional<TaperRangeField> fields[2];
  for (const auto& name : k.tapers) {
    const NamedTaper nt = parse_taper(name);
    if (nt.unit) {
      problem.taper = unit_kriging_taper(obs.size(), grid.size());
    } else if (nt.adaptive) {
      const SupportMetric metric = support_metric(nt.kind);
      auto& field = fields[metric == SupportMetric::euclidean ? 0 : 1];
      if (!field) {
        SelectionParams params;
        params.epsilon = k.epsilon;
        params.metric = metric;
        params.seed = stream(k.seed, rep, 1 + static_cast<std::uint64_t>(metric))();
        field.emplace(obs, adaptive_ranges_best_effort(obs, k.stationary_range, params).theta);
      }
      problem.taper = make_kriging_taper(nt.kind, *field, grid);
    } else {
      problem.taper = make_kriging_taper(nt.kind, obs, grid, k.stationary_range);
    }
    results.push_back(krige_tapered(problem, ws));
  }

  CsvTable t{{"x", "y", "optimal_prediction", "optimal_mse"}, {}};
  for (const auto& name : k.tapers) {
    t.header.push_back(name + "_prediction");
    t.header.push_back(name + "_mse");
  }
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    std::vector<std::string> row{format_double(grid[i].x), format_double(grid[i].y),
                                 format_double(optimal.prediction[ii]), format_double(optimal.mse[ii])};
    for (const auto& r : results) {
      row.push_back(format_double(r.prediction[ii]));
      row.push_back(format_double(r.mse[ii]));
    }
    t.rows.push_back(std::move(row));
  }
  out.table("predictions.csv", t);
  return 0;
}

inline int cmd_loglik(const Args& a, Output& out) {
  const Config& c = a.config;
  const Scenario scenario = scenario_from(c);
  const CovarianceModel model = model_from(c);
  const std::uint64_t seed = seed_from(c);
  const double range = positive(c, "taper.range", 0.1);
  const auto names = tapers_from(c, "T2,block");
  const double eps = epsilon_from(c);

  Rng rng = stream(seed, 0);
  const PointSet points = gen_locations(scenario, rng);
  const Eigen::VectorXd data = sample_gp(points.points(), model, rng);
  const std::vector<double> constant(points.size(), range);
  const long long total = total_nonzeros(row_nonzero_counts(points, constant, SupportMetric::euclidean));

  CsvTable t{{"method", "nonzeros", "loglik"}, {}};
  t.rows.push_back({"exact", std::to_string(static_cast<long long>(points.size()) * static_cast<long long>(points.size())),
                    format_double(exact_loglik(points.points(), data, model))});
  for (const auto& name : names) {
    const NamedTaper nt = parse_taper(name);
    SparseSymMatrix taper;
    if (nt.kind.index() == 3) {
      const int b = c.has("taper.blocks") ? static_cast<int>(c.integer("taper.blocks", 1)) : blocks_for_density(points, total);
      if (b < 1) throw ConfigError("taper.blocks", "must be positive");
      const auto ids = block_assignment(points, b);
      taper = block_pattern(ids);
      t.rows.push_back({"block_sum", std::to_string(taper.nonzeros()),
                        format_double(block_loglik(points.points(), data, model, ids))});
    } else if (nt.unit) {
      taper = ones_pattern(static_cast<Eigen::Index>(points.size()));
    } else if (nt.adaptive) {
      SelectionParams params;
      params.epsilon = eps;
      params.metric = support_metric(nt.kind);
      params.seed = stream(seed, 0, 1)();
      taper = taper_matrix(points, adaptive_ranges_for_stationary(points, range, params).theta, nt.kind);
    } else {
      taper = taper_matrix(points, constant, nt.kind);
    }
    t.rows.push_back({name, std::to_string(taper.nonzeros()), format_double(tapered_loglik(points.points(), data, model, taper))});
  }
  out.table("loglik.csv", t);
  return 0;
}

inline CsvTable estimation_table(const EstimationExperimentResult& r) {
  CsvTable t{{"method", "alpha", "nonzeros", "blocks_per_side"}, {}};
  for (const auto& p : r.parameters) t.header.push_back("asd_" + p);
  for (const auto& row : r.rows) {
    std::vector<std::string> cells{row.method, row.method == "block" ? "" : format_double(row.alpha),
                                   std::to_string(row.nonzeros), std::to_string(row.blocks_per_side)};
    for (double v : row.asd) cells.push_back(format_double(v));
    t.rows.push_back(std::move(cells));
  }
  return t;
}

inline int cmd_godambe(const Args& a, Output& out, nlohmann::json& timings) {
  const auto t0 = std::chrono::steady_clock::now();
  const EstimationExperimentResult r = run_estimation_experiment(estimation_config(a.config, a.threads));
  timings["total_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  out.table("asd.csv", estimation_table(r));
  return 0;
}

inline int cmd_experiment(const Args& a, Output& out, nlohmann::json& timings) {
  const std::string kind = a.config.text("experiment.kind", "kriging");
  if (kind == "estimation") return cmd_godambe(a, out, timings);
  if (kind != "kriging") throw ConfigError("experiment.kind", "unknown experiment '" + kind + "' (kriging, estimation)");
  const KrigingExperimentConfig k = kriging_config(a.config, a.threads);
  const KrigingExperimentResult r = run_kriging_experiment(k);

  CsvTable summary{{"taper", "relative_mse", "mc_sd", "mc_se", "percent"}, {}};
  for (const auto& [name, stat] : r.summary) {
    summary.rows.push_back({name, format_double(stat.mean), format_double(stat.mc_sd), format_double(stat.mc_se),
                            format_double(100.0 * stat.mean)});
  }
  CsvTable reps{{"replicate", "taper", "nonzeros", "stationary_nonzeros", "relative_mse", "jittered",
                   "rows_off_target"}, {}};
  CsvTable times{{"taper", "select_seconds_median", "build_seconds_median", "krige_seconds_median"}, {}};
  for (std::size_t j = 0; j < k.tapers.size(); ++j) {
    std::vector<double> sel, build, krige;
    for (const auto& rep : r.replicates) {
      const auto& t = rep.tapers[j];
      reps.rows.push_back({std::to_string(rep.replicate), t.taper, std::to_string(t.nonzeros),
                           std::to_string(rep.stationary_nonzeros), format_double(t.relative_mse),
                           t.jittered ? "1" : "0", std::to_string(t.rows_off_target)});
      sel.push_back(t.seconds_select);
      build.push_back(t.seconds_build);
      krige.push_back(t.seconds_krige);
    }
    times.rows.push_back({k.tapers[j], format_double(median(sel)), format_double(median(build)), format_double(median(krige))});
    timings[k.tapers[j]] = {{"select", median(sel)}, {"build", median(build)}, {"krige", median(krige)}};
  }
  out.table("results.csv", summary);
  out.table("replicates.csv", reps);
  out.table("timings.csv", times);
  return 0;
}

[[nodiscard]] inline std::string module_of(const std::string& command) {
  if (command == "taper-eval") return "tapers";
  if (command == "select-ranges") return "range_select";
  if (command == "krige") return "kriging";
  if (command == "loglik" || command == "godambe") return "likelihood";
  return "sim";
}

inline void usage(std::ostream& os, const boost::program_options::options_description& opts) {
  os << "usage: adaptaper <taper-eval|select-ranges|krige|loglik|godambe|experiment> [options]\n" << opts;
}

// Entry point; argv[0] is not included in `args`.
inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  namespace po = boost::program_options;
  po::options_description opts("options");
  opts.add_options()("help,h", "show help")("config", po::value<std::string>(), "INI configuration file")(
      "out", po::value<std::string>(), "output directory (default: primary table to stdout)")(
      "seed", po::value<std::string>(), "override run.seed")("replicates", po::value<std::string>(),
                                                              "override run.replicates")(
      "alpha-grid", po::value<std::string>(), "override run.alpha_grid (start:step:stop or list)")(
      "scenario", po::value<std::string>(), "override scenario.name")("taper", po::value<std::string>(),
                                                                      "override taper.names")(
      "model", po::value<std::string>(), "override model.name")("threads", po::value<std::string>(),
                                                                "worker threads (default $ADAPTAPER_THREADS)")(
      "set", po::value<std::vector<std::string>>()->composing(), "override any key: section.key=value")(
      "theta-s", po::value<double>(), "taper-eval: range at s")("theta-t", po::value<double>(),
                                                               "taper-eval: range at t")(
      "d", po::value<double>(), "taper-eval: distance");

  static const std::set<std::string> commands{"taper-eval", "select-ranges", "krige", "loglik", "godambe", "experiment"};
  if (args.empty() || args[0] == "--help" || args[0] == "-h") {
    usage(args.empty() ? err : out, opts);
    return args.empty() ? 2 : 0;
  }
  Args a;
  a.command = args[0];
  try {
    if (!commands.count(a.command)) throw ConfigError("command", "unknown command '" + a.command + "'");
    po::variables_map vm;
    const std::vector<std::string> rest(args.begin() + 1, args.end());
    try {
      po::store(po::command_line_parser(rest).options(opts).run(), vm);
      po::notify(vm);
    } catch (const po::error& e) {
      throw ConfigError("arguments", e.what());
    }
    if (vm.count("help")) {
      usage(out, opts);
      return 0;
    }
    if (vm.count("config")) a.config = Config::load(vm["config"].as<std::string>());
    const std::pair<const char*, const char*> overrides[] = {
        {"seed", "run.seed"},   {"replicates", "run.replicates"}, {"alpha-grid", "run.alpha_grid"},
        {"scenario", "scenario.name"}, {"taper", "taper.names"}, {"model", "model.name"}};
    for (const auto& [flag, key] : overrides) {
      if (vm.count(flag)) a.config.set(key, vm[flag].as<std::string>());
    }
    if (vm.count("set")) {
      for (const auto& kv : vm["set"].as<std::vector<std::string>>()) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("--set", "expected section.key=value, got '" + kv + "'");
        a.config.set(kv.substr(0, eq), kv.substr(eq + 1));
      }
    }
    a.threads = default_threads();
    if (a.config.has("run.threads")) {
      const long long v = a.config.integer("run.threads", 1);
      if (v < 1) throw ConfigError("run.threads", "must be positive");
      a.threads = static_cast<unsigned>(v);
    }
    if (vm.count("threads")) {
      const std::string s = vm["threads"].as<std::string>();
      char* end = nullptr;
      const long v = std::strtol(s.c_str(), &end, 10);
      if (s.empty() || *end != '\0' || v < 1) throw ConfigError("--threads", "expected a positive integer");
      a.threads = static_cast<unsigned>(v);
    }
    if (vm.count("out")) a.out = vm["out"].as<std::string>();
    if (vm.count("taper")) a.taper = vm["taper"].as<std::string>();
    if (vm.count("theta-s")) a.theta_s = vm["theta-s"].as<double>();
    if (vm.count("theta-t")) a.theta_t = vm["theta-t"].as<double>();
    if (vm.count("d")) a.d = vm["d"].as<double>();
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return 2;
  }

  try {
    Output output(a.out, out);
    nlohmann::json timings = nlohmann::json::object();
    int code = 0;
    if (a.command == "taper-eval") {
      code = cmd_taper_eval(a, output, out);
    } else if (a.command == "select-ranges") {
      code = cmd_select_ranges(a, output);
    } else if (a.command == "krige") {
      code = cmd_krige(a, output);
    } else if (a.command == "loglik") {
      code = cmd_loglik(a, output);
    } else if (a.command == "godambe") {
      code = cmd_godambe(a, output, timings);
    } else {
      code = cmd_experiment(a, output, timings);
    }
    output.manifest(a.command, a.config, timings);
    return code;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << module_of(a.command) << ": " << e.what() << '\n';
    return 1;
  }
}

}  // namespace adaptaper::cli
