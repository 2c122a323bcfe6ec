#pragma once

// Gaussian log-likelihoods (exact, tapered, block), Godambe information of the tapered
// likelihood, and a simplex maximum-likelihood fit. The constant -N/2 log(2 pi) is omitted
// throughout.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <gsl/gsl_errno.h>
#include <gsl/gsl_multimin.h>
#include <gsl/gsl_vector.h>

#include "adaptaper/covariance.hpp"
#include "adaptaper/errors.hpp"
#include "adaptaper/geometry.hpp"
#include "adaptaper/sparse.hpp"

namespace adaptaper {

namespace detail {

inline void check_data(std::span<const Point> points, const Eigen::VectorXd& data) {
  if (data.size() != static_cast<Eigen::Index>(points.size())) {
    throw ShapeError("likelihood: data length does not match the number of points");
  }
  if (points.empty()) throw DomainError("likelihood: no observations");
}

}  // namespace detail

// All-ones pattern: the tapered likelihood with this mask is the exact likelihood.
[[nodiscard]] inline SparseSymMatrix ones_pattern(Eigen::Index n) {
  const Eigen::MatrixXd ones = Eigen::MatrixXd::Ones(n, n);
  return SparseSymMatrix(SparseMatrix(ones.sparseView()));
}

// -1/2 log|Sigma| - 1/2 x^T Sigma^{-1} x with a dense factorization.
[[nodiscard]] inline double exact_loglik(std::span<const Point> points, const Eigen::VectorXd& data,
                                         const CovarianceModel& model) {
  detail::check_data(points, data);
  const Eigen::LLT<Eigen::MatrixXd> llt(dense_cov(points, model));
  if (llt.info() != Eigen::Success) throw NotPositiveDefinite(0, 0.0);
  const Eigen::VectorXd z = llt.matrixL().solve(data);
  const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  return -0.5 * logdet - 0.5 * z.squaredNorm();
}

// -1/2 log|Sigma o T| - 1/2 x^T ((Sigma o T)^{-1} o T) x.
[[nodiscard]] inline double tapered_loglik(std::span<const Point> points, const Eigen::VectorXd& data,
                                           const CovarianceModel& model, const SparseSymMatrix& taper) {
  detail::check_data(points, data);
  if (taper.size() != static_cast<Eigen::Index>(points.size())) throw ShapeError("tapered_loglik: taper shape mismatch");
  const Factorization f = factorize(tapered_cov(points, model, taper));
  return -0.5 * f.logdet() - 0.5 * masked_quadratic(f, taper, data);
}

[[nodiscard]] inline double tapered_loglik(std::span<const Point> points, const Eigen::VectorXd& data,
                                           const CovarianceModel& base, const ParamVector& psi,
                                           const SparseSymMatrix& taper) {
  return tapered_loglik(points, data, with_parameters(base, psi), taper);
}

// Sum of exact log-likelihoods of the groups of points sharing a block id.
[[nodiscard]] inline double block_loglik(std::span<const Point> points, const Eigen::VectorXd& data,
                                         const CovarianceModel& model, std::span<const int> blocks) {
  detail::check_data(points, data);
  if (blocks.size() != points.size()) throw ShapeError("block_loglik: every point needs a block id");
  std::map<int, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < blocks.size(); ++i) members[blocks[i]].push_back(i);
  double total = 0.0;
  for (const auto& [id, idx] : members) {
    std::vector<Point> sub;
    Eigen::VectorXd x(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t k = 0; k < idx.size(); ++k) {
      sub.push_back(points[idx[k]]);
      x[static_cast<Eigen::Index>(k)] = data[static_cast<Eigen::Index>(idx[k])];
    }
    total += exact_loglik(sub, x, model);
  }
  return total;
}

// ---------------------------------------------------------------------------------------------
// Godambe information

struct GodambeResult {
  Eigen::MatrixXd EH;
  Eigen::MatrixXd EVV;
  Eigen::MatrixXd G;
  Eigen::VectorXd asd;
};

namespace detail {

inline double asymmetry(const Eigen::MatrixXd& m) {
  const double scale = std::max(m.cwiseAbs().maxCoeff(), std::numeric_limits<double>::min());
  return (m - m.transpose()).cwiseAbs().maxCoeff() / scale;
}

inline Eigen::MatrixXd symmetrized(const Eigen::MatrixXd& m, const char* what) {
  if (asymmetry(m) >= 1e-9) throw std::logic_error(std::string("godambe: ") + what + " is not symmetric");
  return 0.5 * (m + m.transpose());
}

}  // namespace detail

// Expected Hessian and score covariance of the tapered likelihood at the true covariance.
// With D_i = dSigma/dpsi_i o T and S = Sigma o T:
//   E(H)_ij   = -1/2 tr(S^{-1} D_i S^{-1} D_j)
//   E(vv)_ij  =  1/2 tr(M_i Sigma M_j Sigma),  M_i = (S^{-1} D_i S^{-1}) o T
// and G = E(H) E(vv)^{-1} E(H). Only the entries of S^{-1} D_i S^{-1} on the pattern of T are
// needed, so the cost is dominated by one dense inverse and a few sparse-dense products.
[[nodiscard]] inline GodambeResult godambe(std::span<const Point> points, const CovarianceModel& base,
                                           const ParamVector& psi, const SparseSymMatrix& taper) {
  const auto n = static_cast<Eigen::Index>(points.size());
  if (taper.size() != n) throw ShapeError("godambe: taper shape mismatch");
  if (psi.size() == 0) throw DomainError("godambe: no parameters");
  const CovarianceModel model = with_parameters(base, psi);
  const auto k = static_cast<Eigen::Index>(psi.size());

  const Factorization f = factorize(tapered_cov(points, model, taper));
  const Eigen::MatrixXd p = f.inverse();
  const Eigen::MatrixXd sigma = dense_cov(points, model);
  const auto derivs = cov_param_derivatives(points, model, psi, taper);
  const SparseMatrix& t = taper.matrix();

  // a[i] holds (S^{-1} D_i S^{-1}) on the pattern of T, in T's value order.
  std::vector<std::vector<double>> a(static_cast<std::size_t>(k));
  for (Eigen::Index i = 0; i < k; ++i) {
    const Eigen::MatrixXd dp = derivs[static_cast<std::size_t>(i)].matrix() * p;
    auto& ai = a[static_cast<std::size_t>(i)];
    ai.resize(static_cast<std::size_t>(t.nonZeros()));
    for (Eigen::Index col = 0; col < t.outerSize(); ++col) {
      for (int q = t.outerIndexPtr()[col]; q < t.outerIndexPtr()[col + 1]; ++q) {
        const int row = t.innerIndexPtr()[q];
        ai[static_cast<std::size_t>(q)] = p.col(row).dot(dp.col(col));
      }
    }
  }

  Eigen::MatrixXd eh(k, k);
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index j = 0; j < k; ++j) {
      const double* dj = derivs[static_cast<std::size_t>(j)].matrix().valuePtr();
      double s = 0.0;
      for (Eigen::Index q = 0; q < t.nonZeros(); ++q) s += a[static_cast<std::size_t>(i)][static_cast<std::size_t>(q)] * dj[q];
      eh(i, j) = -0.5 * s;
    }
  }

  std::vector<Eigen::MatrixXd> b(static_cast<std::size_t>(k));
  for (Eigen::Index i = 0; i < k; ++i) {
    SparseMatrix mi = t;
    for (Eigen::Index q = 0; q < t.nonZeros(); ++q) {
      mi.valuePtr()[q] = a[static_cast<std::size_t>(i)][static_cast<std::size_t>(q)] * t.valuePtr()[q];
    }
    b[static_cast<std::size_t>(i)] = mi * sigma;
  }
  Eigen::MatrixXd evv(k, k);
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index j = 0; j < k; ++j) {
      evv(i, j) = 0.5 * b[static_cast<std::size_t>(i)].cwiseProduct(b[static_cast<std::size_t>(j)].transpose()).sum();
    }
  }

  GodambeResult r;
  r.EH = detail::symmetrized(eh, "E(H)");
  r.EVV = detail::symmetrized(evv, "E(vv)");
  const Eigen::LDLT<Eigen::MatrixXd> evv_ldlt(r.EVV);
  if (evv_ldlt.info() != Eigen::Success || !(evv_ldlt.vectorD().array() > 0.0).all() ||
      evv_ldlt.rcond() < 1e-14) {
    throw std::runtime_error("godambe: score covariance is singular");
  }
  r.G = detail::symmetrized(r.EH * evv_ldlt.solve(r.EH), "G");
  const Eigen::MatrixXd g_inv = r.G.inverse();
  r.asd = g_inv.diagonal().cwiseMax(0.0).cwiseSqrt();
  return r;
}

// ---------------------------------------------------------------------------------------------
// Maximum likelihood

struct MleOptions {
  std::size_t max_evaluations = 2000;
  double tolerance = 1e-8;
  double initial_step = 0.5;
};

struct MleResult {
  ParamVector psi;
  double loglik = 0.0;
  std::size_t evaluations = 0;
};

namespace detail {

struct MleContext {
  std::span<const Point> points;
  const Eigen::VectorXd* data;
  const CovarianceModel* base;
  const ParamVector* psi0;
  const SparseSymMatrix* taper;
  std::size_t evaluations = 0;
};

inline double objective(const ParamVector& psi, const MleContext& ctx) {
  try {
    const CovarianceModel model = with_parameters(*ctx.base, psi);
    const double l = ctx.taper ? tapered_loglik(ctx.points, *ctx.data, model, *ctx.taper)
                               : exact_loglik(ctx.points, *ctx.data, model);
    return std::isfinite(l) ? -l : 1e300;
  } catch (const NotPositiveDefinite&) {
    return 1e300;
  } catch (const DomainError&) {
    return 1e300;
  }
}

inline double gsl_objective(const gsl_vector* x, void* params) {
  auto* ctx = static_cast<MleContext*>(params);
  ++ctx->evaluations;
  Eigen::VectorXd v(static_cast<Eigen::Index>(x->size));
  for (std::size_t i = 0; i < x->size; ++i) v[static_cast<Eigen::Index>(i)] = gsl_vector_get(x, i);
  return objective(ctx->psi0->with_values(v), *ctx);
}

inline bool has_range_parameter(const ParamVector& psi) {
  return std::any_of(psi.begin(), psi.end(), [](const Parameter& p) { return p.name != "sigma2"; });
}

}  // namespace detail

// Nelder-Mead maximization of the exact (no taper) or tapered log-likelihood over the
// transformed parameters in psi0.
[[nodiscard]] inline MleResult fit_mle(std::span<const Point> points, const Eigen::VectorXd& data,
                                       const CovarianceModel& base, const ParamVector& psi0,
                                       const SparseSymMatrix* taper = nullptr, const MleOptions& options = {}) {
  detail::check_data(points, data);
  if (points.size() < 2 && detail::has_range_parameter(psi0)) {
    throw IdentifiabilityError("fit_mle: range parameters are not identifiable from a single observation");
  }
  const std::size_t dim = psi0.size();
  if (dim == 0) throw DomainError("fit_mle: no parameters to estimate");

  detail::MleContext ctx{points, &data, &base, &psi0, taper, 0};
  const double f0 = detail::objective(psi0, ctx);
  if (!(f0 < 1e300)) throw DomainError("fit_mle: initial parameters are infeasible");

  gsl_set_error_handler_off();
  gsl_multimin_function fn{&detail::gsl_objective, dim, &ctx};
  gsl_vector* x = gsl_vector_alloc(dim);
  gsl_vector* step = gsl_vector_alloc(dim);
  const Eigen::VectorXd start = psi0.values();
  for (std::size_t i = 0; i < dim; ++i) {
    gsl_vector_set(x, i, start[static_cast<Eigen::Index>(i)]);
    const double magnitude = std::abs(start[static_cast<Eigen::Index>(i)]);
    gsl_vector_set(step, i, psi0[i].transform == Transform::log ? options.initial_step
                                                                 : std::max(options.initial_step, 0.1 * magnitude));
  }
  gsl_multimin_fminimizer* solver = gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, dim);
  gsl_multimin_fminimizer_set(solver, &fn, x, step);

  int status = GSL_CONTINUE;
  while (status == GSL_CONTINUE && ctx.evaluations < options.max_evaluations) {
    if (gsl_multimin_fminimizer_iterate(solver) != GSL_SUCCESS) break;
    const double size = gsl_multimin_fminimizer_size(solver);
    status = gsl_multimin_test_size(size, options.tolerance);
  }

  Eigen::VectorXd best(static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < dim; ++i) best[static_cast<Eigen::Index>(i)] = gsl_vector_get(solver->x, i);
  const double fbest = solver->fval;
  gsl_multimin_fminimizer_free(solver);
  gsl_vector_free(step);
  gsl_vector_free(x);

  MleResult r;
  r.evaluations = ctx.evaluations;
  if (fbest <= f0) {
    r.psi = psi0.with_values(best);
    r.loglik = -fbest;
  } else {
    r.psi = psi0;
    r.loglik = -f0;
  }
  if (status != GSL_SUCCESS) {
    const Eigen::VectorXd v = r.psi.values();
    throw ConvergenceError("fit_mle: no convergence within " + std::to_string(options.max_evaluations) +
                               " evaluations",
                           std::vector<double>(v.data(), v.data() + v.size()), -r.loglik);
  }
  return r;
}

}  // namespace adaptaper
