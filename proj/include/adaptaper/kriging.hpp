#pragma once

// Simple (zero-mean) kriging with exact and tapered covariances. Tapered predictions are scored
// with their true mean squared error, evaluated against the untapered covariance.

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "adaptaper/covariance.hpp"
#include "adaptaper/errors.hpp"
#include "adaptaper/geometry.hpp"
#include "adaptaper/interp.hpp"
#include "adaptaper/sparse.hpp"
#include "adaptaper/tapers.hpp"

namespace adaptaper {

// Taper restricted to observations (T00) and between observations and predictions (T01).
struct KrigingTaper {
  SparseSymMatrix obs;
  SparseMatrix cross;
};

// Taper from explicit ranges at observation and prediction points.
[[nodiscard]] inline KrigingTaper make_kriging_taper(const TaperKind& kind, const PointSet& obs,
                                                     std::span<const double> obs_ranges, std::span<const Point> pred,
                                                     std::span<const double> pred_ranges) {
  return {taper_matrix(obs, obs_ranges, kind), taper_matrix(obs, obs_ranges, pred, pred_ranges, kind)};
}

// Taper whose ranges come from a range field: vertex values at the observations, the
// interpolant at prediction points.
[[nodiscard]] inline KrigingTaper make_kriging_taper(const TaperKind& kind, const TaperRangeField& field,
                                                     std::span<const Point> pred) {
  const auto pred_ranges = eval_range(field, pred);
  return make_kriging_taper(kind, field.vertices(), field.values(), pred, pred_ranges);
}

// Constant-range taper.
[[nodiscard]] inline KrigingTaper make_kriging_taper(const TaperKind& kind, const PointSet& obs,
                                                     std::span<const Point> pred, double range) {
  const std::vector<double> a(obs.size(), range);
  const std::vector<double> b(pred.size(), range);
  return make_kriging_taper(kind, obs, a, pred, b);
}

// T identically one: tapered kriging then coincides with exact kriging.
[[nodiscard]] inline KrigingTaper unit_kriging_taper(std::size_t n_obs, std::size_t n_pred) {
  const auto n = static_cast<Eigen::Index>(n_obs);
  const auto m = static_cast<Eigen::Index>(n_pred);
  const Eigen::MatrixXd ones_obs = Eigen::MatrixXd::Ones(n, n);
  const Eigen::MatrixXd ones_cross = Eigen::MatrixXd::Ones(n, m);
  return {SparseSymMatrix(SparseMatrix(ones_obs.sparseView())), SparseMatrix(ones_cross.sparseView())};
}

struct KrigingProblem {
  PointSet obs;
  std::vector<Point> pred;
  CovarianceModel model;
  Eigen::VectorXd data;
  std::optional<KrigingTaper> taper;
};

struct KrigingResult {
  Eigen::VectorXd prediction;
  Eigen::VectorXd mse;
  bool jittered = false;  // a diagonal jitter was needed to factor the tapered matrix
  Eigen::Index taper_nonzeros = 0;
};

// Quantities of the exact problem shared by all tapers on the same locations.
struct KrigingWorkspace {
  Eigen::LLT<Eigen::MatrixXd> sigma00;
  Eigen::MatrixXd sigma01;
  Eigen::VectorXd sigma11_diag;
};

namespace detail {

inline void check_problem(const KrigingProblem& p) {
  validate(p.model);
  if (p.data.size() != static_cast<Eigen::Index>(p.obs.size())) {
    throw ShapeError("kriging: data length does not match the number of observations");
  }
  if (p.obs.empty()) throw DomainError("kriging: no observations");
}

}  // namespace detail

[[nodiscard]] inline KrigingWorkspace make_workspace(const PointSet& obs, std::span<const Point> pred,
                                                     const CovarianceModel& model) {
  KrigingWorkspace ws;
  ws.sigma00.compute(dense_cov(obs.points(), model));
  if (ws.sigma00.info() != Eigen::Success) throw NotPositiveDefinite(0, 0.0);
  ws.sigma01 = dense_cov(obs.points(), pred, model);
  ws.sigma11_diag.resize(static_cast<Eigen::Index>(pred.size()));
  for (std::size_t i = 0; i < pred.size(); ++i) {
    ws.sigma11_diag[static_cast<Eigen::Index>(i)] = marginal_variance(model, pred[i]);
  }
  return ws;
}

[[nodiscard]] inline KrigingResult krige_optimal(const KrigingProblem& p, const KrigingWorkspace& ws) {
  detail::check_problem(p);
  KrigingResult r;
  const Eigen::MatrixXd v = ws.sigma00.matrixL().solve(ws.sigma01);
  const Eigen::VectorXd z = ws.sigma00.matrixL().solve(p.data);
  r.prediction = v.transpose() * z;
  r.mse = (ws.sigma11_diag - v.colwise().squaredNorm().transpose()).cwiseMax(0.0);
  return r;
}

[[nodiscard]] inline KrigingResult krige_optimal(const KrigingProblem& p) {
  detail::check_problem(p);
  return krige_optimal(p, make_workspace(p.obs, p.pred, p.model));
}

// Tapered predictor Sigma~10 Sigma~00^{-1} x0 with MSE
// diag(Sigma11 - 2 Sigma10 W + W^T Sigma00 W), W = Sigma~00^{-1} Sigma~01.
[[nodiscard]] inline KrigingResult krige_tapered(const KrigingProblem& p, const KrigingWorkspace& ws) {
  detail::check_problem(p);
  if (!p.taper) throw DomainError("krige_tapered: problem has no taper");
  const auto n = static_cast<Eigen::Index>(p.obs.size());
  const auto m = static_cast<Eigen::Index>(p.pred.size());
  if (p.taper->obs.size() != n || p.taper->cross.rows() != n || p.taper->cross.cols() != m) {
    throw ShapeError("krige_tapered: taper shape does not match the problem");
  }
  KrigingResult r;
  r.taper_nonzeros = p.taper->obs.nonzeros();
  SparseSymMatrix s00 = tapered_cov(p.obs.points(), p.model, p.taper->obs);
  std::optional<Factorization> f;
  try {
    f.emplace(factorize(s00));
  } catch (const NotPositiveDefinite&) {
    double scale = 0.0;
    for (const auto& s : p.obs) scale = std::max(scale, marginal_variance(p.model, s));
    s00.add_to_diagonal(1e-10 * scale);
    f.emplace(factorize(s00));
    r.jittered = true;
  }
  const SparseMatrix s01 = tapered_cov(p.obs.points(), p.pred, p.model, p.taper->cross);
  const Eigen::MatrixXd w = f->solve(Eigen::MatrixXd(s01));
  r.prediction = w.transpose() * p.data;
  const Eigen::MatrixXd lw = ws.sigma00.matrixU() * w;
  r.mse = (ws.sigma11_diag - 2.0 * ws.sigma01.cwiseProduct(w).colwise().sum().transpose() +
           lw.colwise().squaredNorm().transpose())
              .cwiseMax(0.0);
  return r;
}

[[nodiscard]] inline KrigingResult krige_tapered(const KrigingProblem& p) {
  detail::check_problem(p);
  return krige_tapered(p, make_workspace(p.obs, p.pred, p.model));
}

struct RelativeMse {
  double mean = 0.0;     // mean over replicates and points of (tapered - optimal) / optimal
  double mc_sd = 0.0;    // standard deviation of the per-replicate means
  double mc_se = 0.0;    // mc_sd / sqrt(replicates)
  std::vector<double> per_replicate;
};

[[nodiscard]] inline RelativeMse summarize_replicates(std::vector<double> per_replicate) {
  RelativeMse out;
  const auto reps = static_cast<double>(per_replicate.size());
  for (double v : per_replicate) out.mean += v / reps;
  if (per_replicate.size() > 1) {
    double ss = 0.0;
    for (double v : per_replicate) ss += (v - out.mean) * (v - out.mean);
    out.mc_sd = std::sqrt(ss / (reps - 1.0));
    out.mc_se = out.mc_sd / std::sqrt(reps);
  }
  out.per_replicate = std::move(per_replicate);
  return out;
}

[[nodiscard]] inline double relative_mse_increase(const Eigen::VectorXd& optimal, const Eigen::VectorXd& tapered) {
  if (optimal.size() != tapered.size() || optimal.size() == 0) throw ShapeError("relative MSE: shape mismatch");
  if (!(optimal.array() > 0.0).all()) throw DomainError("relative MSE: optimal MSE must be positive");
  return ((tapered - optimal).array() / optimal.array()).mean();
}

[[nodiscard]] inline RelativeMse relative_mse_increase(std::span<const Eigen::VectorXd> optimal,
                                                       std::span<const Eigen::VectorXd> tapered) {
  if (optimal.size() != tapered.size() || optimal.empty()) throw ShapeError("relative MSE: replicate count mismatch");
  RelativeMse out;
  for (std::size_t r = 0; r < optimal.size(); ++r) {
    if (optimal[r].size() != optimal[0].size()) throw ShapeError("relative MSE: ragged replicates");
    out.per_replicate.push_back(relative_mse_increase(optimal[r], tapered[r]));
  }
  return summarize_replicates(out.per_replicate);
}

// n x n regular lattice over [x0, x0 + side]^2 including the boundary, x-fastest.
[[nodiscard]] inline std::vector<Point> lattice(int n, double x0 = 0.0, double side = 1.0) {
  if (n < 2) throw DomainError("lattice: need at least two nodes per side");
  std::vector<Point> out;
  out.reserve(static_cast<std::size_t>(n) * static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) out.push_back({x0 + side * i / (n - 1), x0 + side * j / (n - 1)});
  }
  return out;
}

}  // namespace adaptaper
