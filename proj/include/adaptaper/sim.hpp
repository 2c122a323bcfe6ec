#pragma once

// Location scenarios, Gaussian field sampling, and the kriging / estimation experiments.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdint>
#include <exception>
#include <limits>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <fftw3.h>

#include "adaptaper/covariance.hpp"
#include "adaptaper/errors.hpp"
#include "adaptaper/geometry.hpp"
#include "adaptaper/interp.hpp"
#include "adaptaper/kriging.hpp"
#include "adaptaper/likelihood.hpp"
#include "adaptaper/range_select.hpp"
#include "adaptaper/tapers.hpp"

namespace adaptaper {

using Rng = std::mt19937_64;

// Independent stream for (seed, index); the same pair always yields the same stream.
[[nodiscard]] inline Rng stream(std::uint64_t seed, std::uint64_t index, std::uint64_t salt = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                    static_cast<std::uint32_t>(salt)};
  return Rng(seq);
}

// ---------------------------------------------------------------------------------------------
// Scenarios

struct PerturbedGrid {
  int per_side = 32;
  double jitter = 0.45;
};
struct UniformRandom {
  std::size_t n = 1024;
};
struct ClusteredLGCP {
  std::size_t n = 1024;
  MaternParams field{2.0, 10.0, 0.5};
  int grid = 256;
};

using Scenario = std::variant<PerturbedGrid, UniformRandom, ClusteredLGCP>;

[[nodiscard]] inline std::string scenario_name(const Scenario& s) {
  switch (s.index()) {
    case 0: return "structured";
    case 1: return "random";
    default: return "clustered";
  }
}

namespace detail {

inline std::mutex& fftw_plan_mutex() {
  static std::mutex m;
  return m;
}

// Mean-zero stationary field on the g x g nodes {i/g} of the unit square by circulant embedding
// on a 2g x 2g torus. Negative eigenvalues of the embedding are set to zero.
inline Eigen::MatrixXd circulant_field(const MaternParams& p, int g, Rng& rng) {
  const int m = 2 * g;
  const double h = 1.0 / g;
  const auto total = static_cast<std::size_t>(m) * static_cast<std::size_t>(m);
  fftw_complex* buf = fftw_alloc_complex(total);
  fftw_plan plan{};
  {
    std::lock_guard lock(fftw_plan_mutex());
    plan = fftw_plan_dft_2d(m, m, buf, buf, FFTW_FORWARD, FFTW_ESTIMATE);
  }
  for (int i = 0; i < m; ++i) {
    const double dx = std::min(i, m - i) * h;
    for (int j = 0; j < m; ++j) {
      const double dy = std::min(j, m - j) * h;
      const auto k = static_cast<std::size_t>(i) * static_cast<std::size_t>(m) + static_cast<std::size_t>(j);
      buf[k][0] = matern_cov(std::hypot(dx, dy), p);
      buf[k][1] = 0.0;
    }
  }
  fftw_execute(plan);
  std::vector<double> lambda(total);
  for (std::size_t k = 0; k < total; ++k) lambda[k] = std::max(buf[k][0], 0.0);
  std::normal_distribution<double> normal;
  for (std::size_t k = 0; k < total; ++k) {
    const double scale = std::sqrt(lambda[k] / static_cast<double>(total));
    buf[k][0] = scale * normal(rng);
    buf[k][1] = scale * normal(rng);
  }
  fftw_execute(plan);
  Eigen::MatrixXd z(g, g);
  for (int i = 0; i < g; ++i) {
    for (int j = 0; j < g; ++j) z(i, j) = buf[static_cast<std::size_t>(i) * static_cast<std::size_t>(m) + static_cast<std::size_t>(j)][0];
  }
  {
    std::lock_guard lock(fftw_plan_mutex());
    fftw_destroy_plan(plan);
  }
  fftw_free(buf);
  return z;
}

}  // namespace detail

[[nodiscard]] inline PointSet gen_locations(const Scenario& scenario, Rng& rng) {
  std::vector<Point> pts;
  std::visit(
      [&](const auto& s) {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, PerturbedGrid>) {
          if (s.per_side < 1 || !(s.jitter >= 0.0 && s.jitter <= 0.5)) throw DomainError("perturbed grid: bad parameters");
          std::uniform_real_distribution<double> u(-s.jitter, s.jitter);
          for (int j = 0; j < s.per_side; ++j) {
            for (int i = 0; i < s.per_side; ++i) {
              const double du = s.jitter > 0.0 ? u(rng) : 0.0;
              const double dv = s.jitter > 0.0 ? u(rng) : 0.0;
              pts.push_back({(0.5 + i + du) / s.per_side, (0.5 + j + dv) / s.per_side});
            }
          }
        } else if constexpr (std::is_same_v<S, UniformRandom>) {
          std::uniform_real_distribution<double> u(0.0, 1.0);
          for (std::size_t k = 0; k < s.n; ++k) {
            const double x = u(rng);
            pts.push_back({x, u(rng)});
          }
        } else {
          validate(s.field);
          if (s.grid < 2) throw DomainError("clustered scenario: grid too coarse");
          const Eigen::MatrixXd z = detail::circulant_field(s.field, s.grid, rng);
          std::vector<double> weight(static_cast<std::size_t>(z.size()));
          const double zmax = z.maxCoeff();
          for (Eigen::Index k = 0; k < z.size(); ++k) weight[static_cast<std::size_t>(k)] = std::exp(z.data()[k] - zmax);
          std::discrete_distribution<std::size_t> cell(weight.begin(), weight.end());
          std::uniform_real_distribution<double> u(0.0, 1.0);
          for (std::size_t k = 0; k < s.n; ++k) {
            const std::size_t c = cell(rng);
            // Column-major storage: c = i + grid * j with i along x.
            const auto i = static_cast<double>(c % static_cast<std::size_t>(s.grid));
            const auto j = static_cast<double>(c / static_cast<std::size_t>(s.grid));
            const double x = (i + u(rng)) / s.grid;
            pts.push_back({x, (j + u(rng)) / s.grid});
          }
        }
      },
      scenario);
  return PointSet(std::move(pts));
}

// x = L z with Sigma = L L^T and z standard normal.
[[nodiscard]] inline Eigen::VectorXd sample_gp(std::span<const Point> points, const CovarianceModel& model, Rng& rng) {
  const Eigen::LLT<Eigen::MatrixXd> llt(dense_cov(points, model));
  if (llt.info() != Eigen::Success) throw NotPositiveDefinite(0, 0.0);
  std::normal_distribution<double> normal;
  Eigen::VectorXd z(static_cast<Eigen::Index>(points.size()));
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = normal(rng);
  return llt.matrixL() * z;
}

// Runs body(i) for i in [0, n) on up to `threads` workers. Results must be written by index.
// The exception of the lowest failing index is rethrown.
template <class F>
void parallel_for(std::size_t n, unsigned threads, F&& body) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        body(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const unsigned count = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(n)));
  if (count == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < count; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

// ---------------------------------------------------------------------------------------------
// Taper names used by the experiments

struct NamedTaper {
  std::string name;
  TaperKind kind;
  bool adaptive = false;
  bool unit = false;
};

// W (Wendland), T<n>h (stationary hyperspherical), T<n> (adaptive hyperspherical),
// P1 / P2 (adaptive product), one (T identically 1), block.
[[nodiscard]] inline NamedTaper parse_taper(const std::string& name) {
  if (name == "W") return {name, Wendland{}, false, false};
  if (name == "one") return {name, Wendland{}, false, true};
  if (name == "block") return {name, BlockDiagonal{}, false, false};
  if (name == "P1" || name == "P2") return {name, Product{name[1] - '0'}, true, false};
  if (name.size() >= 2 && name[0] == 'T') {
    const bool stationary = name.back() == 'h';
    const std::string digits = name.substr(1, name.size() - 1 - (stationary ? 1 : 0));
    if (!digits.empty() && digits.size() <= 2 && std::all_of(digits.begin(), digits.end(), ::isdigit)) {
      const int n = std::stoi(digits);
      if (n >= 1) return {name, Hyperspherical{n}, !stationary, false};
    }
  }
  throw DomainError("unknown taper '" + name + "'");
}

// ---------------------------------------------------------------------------------------------
// Kriging experiment

struct KrigingExperimentConfig {
  Scenario scenario = PerturbedGrid{};
  MaternParams model{1.0, 20.0, 0.5};
  double stationary_range = 0.1;
  std::vector<std::string> tapers{"W", "T2h", "T2", "P1", "P2"};
  int replicates = 20;
  std::uint64_t seed = 1;
  int grid = 50;
  double epsilon = 0.01;
  unsigned threads = 1;
};

struct TaperOutcome {
  std::string taper;
  Eigen::Index nonzeros = 0;
  double relative_mse = 0.0;
  bool jittered = false;
  int rows_off_target = 0;  // adaptive tapers: rows more than one off target after selection
  double seconds_select = 0.0;
  double seconds_build = 0.0;
  double seconds_krige = 0.0;
};

struct ReplicateOutcome {
  std::size_t replicate = 0;
  long long stationary_nonzeros = 0;
  double mean_abs_prediction = 0.0;  // mean |optimal prediction|, a data-dependent checksum
  std::vector<TaperOutcome> tapers;
};

struct KrigingExperimentResult {
  std::vector<ReplicateOutcome> replicates;
  std::vector<std::pair<std::string, RelativeMse>> summary;
};

namespace detail {

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

inline void check_config(const KrigingExperimentConfig& cfg) {
  if (cfg.replicates < 1) throw DomainError("replicates must be at least 1");
  if (!(cfg.stationary_range > 0.0)) throw DomainError("stationary range must be positive");
  if (cfg.grid < 2) throw DomainError("prediction grid needs at least 2 nodes per side");
  if (cfg.tapers.empty()) throw DomainError("no tapers requested");
  validate(cfg.model);
  for (const auto& t : cfg.tapers) {
    if (parse_taper(t).kind.index() == 3) throw DomainError("block taper is not available for kriging");
  }
}

}  // namespace detail

[[nodiscard]] inline ReplicateOutcome run_kriging_replicate(const KrigingExperimentConfig& cfg, std::size_t rep,
                                                            const std::vector<Point>& grid) {
  using clock = std::chrono::steady_clock;
  Rng rng = stream(cfg.seed, rep);
  const PointSet obs = gen_locations(cfg.scenario, rng);
  const KrigingWorkspace ws = make_workspace(obs, grid, cfg.model);
  std::normal_distribution<double> normal;
  Eigen::VectorXd z(static_cast<Eigen::Index>(obs.size()));
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = normal(rng);
  KrigingProblem problem{obs, grid, cfg.model, ws.sigma00.matrixL() * z, std::nullopt};
  const KrigingResult optimal = krige_optimal(problem, ws);

  ReplicateOutcome out;
  out.replicate = rep;
  out.mean_abs_prediction = optimal.prediction.cwiseAbs().mean();
  const std::vector<double> constant(obs.size(), cfg.stationary_range);
  out.stationary_nonzeros = total_nonzeros(row_nonzero_counts(obs, constant, SupportMetric::euclidean));

  struct Adaptive {
    std::optional<TaperRangeField> field;
    int rows_off_target = 0;
    double seconds = 0.0;
  };
  Adaptive by_metric[2];
  auto adaptive_field = [&](SupportMetric metric) -> Adaptive& {
    Adaptive& a = by_metric[metric == SupportMetric::euclidean ? 0 : 1];
    if (a.field) return a;
    const auto t0 = clock::now();
    SelectionParams params;
    params.epsilon = cfg.epsilon;
    params.metric = metric;
    params.seed = stream(cfg.seed, rep, 1 + static_cast<std::uint64_t>(metric))();
    BestEffortSelection sel = adaptive_ranges_best_effort(obs, cfg.stationary_range, params);
    a.rows_off_target = sel.rows_off_target;
    a.field.emplace(obs, std::move(sel.theta));
    a.seconds = detail::seconds_since(t0);
    return a;
  };

  for (const auto& name : cfg.tapers) {
    const NamedTaper nt = parse_taper(name);
    TaperOutcome t;
    t.taper = name;
    auto t0 = clock::now();
    KrigingTaper taper;
    if (nt.unit) {
      taper = unit_kriging_taper(obs.size(), grid.size());
    } else if (nt.adaptive) {
      Adaptive& a = adaptive_field(support_metric(nt.kind));
      t.seconds_select = a.seconds;
      t.rows_off_target = a.rows_off_target;
      t0 = clock::now();
      taper = make_kriging_taper(nt.kind, *a.field, grid);
    } else {
      taper = make_kriging_taper(nt.kind, obs, grid, cfg.stationary_range);
    }
    t.seconds_build = detail::seconds_since(t0);
    problem.taper = std::move(taper);
    t0 = clock::now();
    const KrigingResult tapered = krige_tapered(problem, ws);
    t.seconds_krige = detail::seconds_since(t0);
    t.nonzeros = tapered.taper_nonzeros;
    t.jittered = tapered.jittered;
    t.relative_mse = relative_mse_increase(optimal.mse, tapered.mse);
    out.tapers.push_back(t);
  }
  return out;
}

[[nodiscard]] inline KrigingExperimentResult run_kriging_experiment(const KrigingExperimentConfig& cfg) {
  detail::check_config(cfg);
  const std::vector<Point> grid = lattice(cfg.grid);
  KrigingExperimentResult result;
  result.replicates.resize(static_cast<std::size_t>(cfg.replicates));
  parallel_for(result.replicates.size(), cfg.threads, [&](std::size_t rep) {
    try {
      result.replicates[rep] = run_kriging_replicate(cfg, rep, grid);
    } catch (const std::exception& e) {
      throw std::runtime_error("replicate " + std::to_string(rep) + ": " + e.what());
    }
  });
  for (std::size_t k = 0; k < cfg.tapers.size(); ++k) {
    std::vector<double> per;
    for (const auto& r : result.replicates) per.push_back(r.tapers[k].relative_mse);
    result.summary.emplace_back(cfg.tapers[k], summarize_replicates(std::move(per)));
  }
  return result;
}

// ---------------------------------------------------------------------------------------------
// Estimation experiment

struct EstimationExperimentConfig {
  Scenario scenario = PerturbedGrid{};
  CovarianceModel model = MaternParams{10.0, 10.0, 0.5};
  double density = 0.01;  // target non-zeros as a fraction of N^2
  std::vector<double> alpha_grid{0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
  int dimension = 2;  // hyperspherical taper T_n
  bool block = true;
  std::uint64_t seed = 1;
  double epsilon = 0.01;
  unsigned threads = 1;
};

struct EstimationRow {
  std::string method;  // "alpha" or "block"
  double alpha = std::numeric_limits<double>::quiet_NaN();
  long long nonzeros = 0;
  int blocks_per_side = 0;
  std::vector<double> asd;
};

struct EstimationExperimentResult {
  std::vector<std::string> parameters;
  long long target_nonzeros = 0;
  std::vector<EstimationRow> rows;
};

[[nodiscard]] inline EstimationExperimentResult run_estimation_experiment(const EstimationExperimentConfig& cfg) {
  validate(cfg.model);
  if (!(cfg.density > 0.0 && cfg.density <= 1.0)) throw DomainError("density must lie in (0, 1]");
  if (cfg.dimension < 1) throw DomainError("taper dimension must be positive");
  for (double a : cfg.alpha_grid) {
    if (!(a >= 0.0 && a <= 1.0)) throw DomainError("alpha values must lie in [0, 1]");
  }
  Rng rng = stream(cfg.seed, 0);
  const PointSet points = gen_locations(cfg.scenario, rng);
  const auto n = static_cast<long long>(points.size());
  const ParamVector psi = parameters_of(cfg.model);

  EstimationExperimentResult result;
  for (const auto& p : psi) result.parameters.push_back(p.name);
  result.target_nonzeros = std::max(n, std::llround(cfg.density * static_cast<double>(n) * static_cast<double>(n)));
  const double theta0 = stationary_range_for_density(points, result.target_nonzeros);

  auto to_vector = [](const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  std::vector<EstimationRow> rows(cfg.alpha_grid.size() + (cfg.block ? 1 : 0));
  parallel_for(rows.size(), cfg.threads, [&](std::size_t k) {
    EstimationRow& row = rows[k];
    if (k == cfg.alpha_grid.size()) {
      const int b = blocks_for_density(points, result.target_nonzeros);
      const SparseSymMatrix t = block_pattern(points, b);
      row.method = "block";
      row.blocks_per_side = b;
      row.nonzeros = t.nonzeros();
      row.asd = to_vector(godambe(points.points(), cfg.model, psi, t).asd);
      return;
    }
    const double alpha = cfg.alpha_grid[k];
    const RowTargets targets = alpha_adaptive_targets(points, result.target_nonzeros, alpha);
    SelectionParams params;
    params.epsilon = cfg.epsilon;
    params.seed = stream(cfg.seed, k, 7)();
    const TaperRanges theta = theta_set(targets, TaperRanges(points.size(), theta0), points, params);
    const SparseSymMatrix t = taper_matrix(points, theta, Hyperspherical{cfg.dimension});
    row.method = "alpha";
    row.alpha = alpha;
    row.nonzeros = t.nonzeros();
    row.asd = to_vector(godambe(points.points(), cfg.model, psi, t).asd);
  });
  result.rows = std::move(rows);
  return result;
}

}  // namespace adaptaper
