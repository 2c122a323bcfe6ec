#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "adaptaper/errors.hpp"
#include "adaptaper/geometry.hpp"
#include "adaptaper/sparse.hpp"
#include "adaptaper/tapers.hpp"

namespace adaptaper {

// Stationary Matern covariance sigma^2 2^{1-nu}/Gamma(nu) (kappa h)^nu K_nu(kappa h).
struct MaternParams {
  double sigma = 1.0;
  double kappa = 1.0;
  double nu = 0.5;
};

// Non-stationary exponential covariance in the Paciorek-Schervish form with Sigma(s) = kappa(s) I
// and log kappa(s) = kappa1 + kappa2 * s.x.
struct NonstatExpParams {
  double sigma2 = 1.0;
  double kappa1 = 0.0;
  double kappa2 = 0.0;
};

using CovarianceModel = std::variant<MaternParams, NonstatExpParams>;

inline void validate(const MaternParams& p) {
  if (!(p.sigma > 0.0 && p.kappa > 0.0 && p.nu > 0.0)) {
    throw DomainError("matern: sigma, kappa and nu must be positive");
  }
}

inline void validate(const NonstatExpParams& p) {
  if (!(p.sigma2 > 0.0)) throw DomainError("nonstationary exponential: sigma2 must be positive");
  if (!std::isfinite(p.kappa1) || !std::isfinite(p.kappa2)) {
    throw DomainError("nonstationary exponential: kappa1 and kappa2 must be finite");
  }
}

inline void validate(const CovarianceModel& model) {
  std::visit([](const auto& p) { validate(p); }, model);
}

// Distance at which the Matern correlation has dropped to roughly 0.1.
[[nodiscard]] inline double practical_range(double nu, double kappa) { return std::sqrt(8.0 * nu) / kappa; }

// kappa giving the requested practical range.
[[nodiscard]] inline double kappa_for_range(double nu, double range) { return std::sqrt(8.0 * nu) / range; }

namespace detail {

inline bool is_half_integer(double nu, double target) { return std::abs(nu - target) < 1e-14; }

inline double matern_correlation(double z, double nu) {
  if (z == 0.0) return 1.0;
  if (is_half_integer(nu, 0.5)) return std::exp(-z);
  if (is_half_integer(nu, 1.5)) return (1.0 + z) * std::exp(-z);
  if (is_half_integer(nu, 2.5)) return (1.0 + z + z * z / 3.0) * std::exp(-z);
  if (z > 700.0) return 0.0;
  const double log_front = (1.0 - nu) * std::log(2.0) - std::lgamma(nu) + nu * std::log(z);
  return std::exp(log_front) * std::cyl_bessel_k(nu, z);
}

// d/dz of the correlation above.
inline double matern_correlation_dz(double z, double nu) {
  if (z == 0.0) return is_half_integer(nu, 0.5) ? -1.0 : 0.0;
  if (is_half_integer(nu, 0.5)) return -std::exp(-z);
  if (is_half_integer(nu, 1.5)) return -z * std::exp(-z);
  if (is_half_integer(nu, 2.5)) return -z * (1.0 + z) / 3.0 * std::exp(-z);
  if (z > 700.0) return 0.0;
  // d/dz [z^nu K_nu(z)] = -z^nu K_{nu-1}(z)
  const double log_front = (1.0 - nu) * std::log(2.0) - std::lgamma(nu) + nu * std::log(z);
  return -std::exp(log_front) * std::cyl_bessel_k(std::abs(nu - 1.0), z);
}

}  // namespace detail

[[nodiscard]] inline double matern_cov(double h, const MaternParams& p) {
  validate(p);
  if (h < 0.0) throw DomainError("matern: distance must be non-negative");
  return p.sigma * p.sigma * detail::matern_correlation(p.kappa * h, p.nu);
}

[[nodiscard]] inline double nonstat_kappa(const NonstatExpParams& p, Point s) {
  return std::exp(p.kappa1 + p.kappa2 * s.x);
}

[[nodiscard]] inline double nonstat_exp_cov(Point s, Point t, const NonstatExpParams& p) {
  const double a = nonstat_kappa(p, s);
  const double b = nonstat_kappa(p, t);
  const double mean = 0.5 * (a + b);
  // |Sigma(s)|^{1/4} |Sigma(t)|^{1/4} |(Sigma(s)+Sigma(t))/2|^{-1/2} in two dimensions.
  const double prefactor = std::sqrt(a * b) / mean;
  return p.sigma2 * prefactor * std::exp(-distance(s, t) / std::sqrt(mean));
}

[[nodiscard]] inline double cov_value(const CovarianceModel& model, Point s, Point t) {
  return std::visit(
      [&](const auto& p) -> double {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, MaternParams>) {
          return p.sigma * p.sigma * detail::matern_correlation(p.kappa * distance(s, t), p.nu);
        } else {
          return nonstat_exp_cov(s, t, p);
        }
      },
      model);
}

[[nodiscard]] inline double marginal_variance(const CovarianceModel& model, Point s) {
  return cov_value(model, s, s);
}

// ---------------------------------------------------------------------------------------------
// Parameter vectors

enum class Transform { identity, log };

struct Parameter {
  std::string name;
  double value = 0.0;  // on the transformed scale
  Transform transform = Transform::identity;

  [[nodiscard]] double natural() const { return transform == Transform::log ? std::exp(value) : value; }
};

// Ordered estimable parameters of a model. Matern: (sigma2, kappa), nu held fixed.
// Nonstationary exponential: (sigma2, kappa1, kappa2).
class ParamVector {
 public:
  ParamVector() = default;
  explicit ParamVector(std::vector<Parameter> params) : params_(std::move(params)) {}

  [[nodiscard]] std::size_t size() const noexcept { return params_.size(); }
  [[nodiscard]] const Parameter& operator[](std::size_t i) const { return params_[i]; }
  [[nodiscard]] Parameter& operator[](std::size_t i) { return params_[i]; }
  [[nodiscard]] auto begin() const noexcept { return params_.begin(); }
  [[nodiscard]] auto end() const noexcept { return params_.end(); }

  [[nodiscard]] Eigen::VectorXd values() const {
    Eigen::VectorXd v(static_cast<Eigen::Index>(params_.size()));
    for (std::size_t i = 0; i < params_.size(); ++i) v[static_cast<Eigen::Index>(i)] = params_[i].value;
    return v;
  }

  [[nodiscard]] ParamVector with_values(const Eigen::VectorXd& v) const {
    if (static_cast<std::size_t>(v.size()) != params_.size()) throw ShapeError("parameter vector length mismatch");
    ParamVector out = *this;
    for (std::size_t i = 0; i < params_.size(); ++i) out.params_[i].value = v[static_cast<Eigen::Index>(i)];
    return out;
  }

 private:
  std::vector<Parameter> params_;
};

// Parameters of `model`; `positive` is applied to the strictly positive ones.
[[nodiscard]] inline ParamVector parameters_of(const CovarianceModel& model, Transform positive = Transform::log) {
  auto encode = [positive](double v) { return positive == Transform::log ? std::log(v) : v; };
  return std::visit(
      [&](const auto& p) -> ParamVector {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, MaternParams>) {
          return ParamVector({{"sigma2", encode(p.sigma * p.sigma), positive},
                              {"kappa", encode(p.kappa), positive}});
        } else {
          return ParamVector({{"sigma2", encode(p.sigma2), positive},
                              {"kappa1", p.kappa1, Transform::identity},
                              {"kappa2", p.kappa2, Transform::identity}});
        }
      },
      model);
}

// Copy of `base` with the entries of `psi` substituted.
[[nodiscard]] inline CovarianceModel with_parameters(const CovarianceModel& base, const ParamVector& psi) {
  CovarianceModel out = base;
  for (const auto& param : psi) {
    const double v = param.natural();
    std::visit(
        [&](auto& p) {
          using P = std::decay_t<decltype(p)>;
          if constexpr (std::is_same_v<P, MaternParams>) {
            if (param.name == "sigma2") {
              p.sigma = std::sqrt(v);
            } else if (param.name == "kappa") {
              p.kappa = v;
            } else if (param.name == "nu") {
              p.nu = v;
            } else {
              throw DomainError("matern has no parameter '" + param.name + "'");
            }
          } else {
            if (param.name == "sigma2") {
              p.sigma2 = v;
            } else if (param.name == "kappa1") {
              p.kappa1 = v;
            } else if (param.name == "kappa2") {
              p.kappa2 = v;
            } else {
              throw DomainError("nonstationary exponential has no parameter '" + param.name + "'");
            }
          }
        },
        out);
  }
  return out;
}

// Gradient of C(s, t) with respect to the (transformed) entries of `psi`, evaluated at `model`.
[[nodiscard]] inline Eigen::VectorXd cov_gradient(const CovarianceModel& model, const ParamVector& psi, Point s,
                                                  Point t) {
  Eigen::VectorXd g(static_cast<Eigen::Index>(psi.size()));
  for (std::size_t i = 0; i < psi.size(); ++i) {
    const Parameter& param = psi[i];
    const double natural_derivative = std::visit(
        [&](const auto& p) -> double {
          using P = std::decay_t<decltype(p)>;
          if constexpr (std::is_same_v<P, MaternParams>) {
            const double h = distance(s, t);
            const double z = p.kappa * h;
            if (param.name == "sigma2") return detail::matern_correlation(z, p.nu);
            if (param.name == "kappa") return p.sigma * p.sigma * h * detail::matern_correlation_dz(z, p.nu);
            throw DomainError("no analytic derivative of matern with respect to '" + param.name + "'");
          } else {
            const double a = nonstat_kappa(p, s);
            const double b = nonstat_kappa(p, t);
            const double mean = 0.5 * (a + b);
            const double d = distance(s, t);
            const double c = nonstat_exp_cov(s, t, p);
            if (param.name == "sigma2") return c / p.sigma2;
            // log C = log sigma2 + (log a + log b)/2 - log m - d m^{-1/2}
            const double dlog_dm = -1.0 / mean + 0.5 * d / (mean * std::sqrt(mean));
            const double dlog_da = 0.5 / a + 0.5 * dlog_dm;
            const double dlog_db = 0.5 / b + 0.5 * dlog_dm;
            if (param.name == "kappa1") return c * (a * dlog_da + b * dlog_db);
            if (param.name == "kappa2") return c * (a * s.x * dlog_da + b * t.x * dlog_db);
            throw DomainError("no analytic derivative of the nonstationary model with respect to '" +
                              param.name + "'");
          }
        },
        model);
    const double chain = param.transform == Transform::log ? param.natural() : 1.0;
    g[static_cast<Eigen::Index>(i)] = natural_derivative * chain;
  }
  return g;
}

// ---------------------------------------------------------------------------------------------
// Matrix assembly

[[nodiscard]] inline Eigen::MatrixXd dense_cov(std::span<const Point> a, std::span<const Point> b,
                                               const CovarianceModel& model) {
  validate(model);
  Eigen::MatrixXd out(static_cast<Eigen::Index>(a.size()), static_cast<Eigen::Index>(b.size()));
  for (std::size_t j = 0; j < b.size(); ++j) {
    for (std::size_t i = 0; i < a.size(); ++i) {
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = cov_value(model, a[i], b[j]);
    }
  }
  return out;
}

[[nodiscard]] inline Eigen::MatrixXd dense_cov(std::span<const Point> points, const CovarianceModel& model) {
  validate(model);
  const auto n = static_cast<Eigen::Index>(points.size());
  Eigen::MatrixXd out(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = j; i < n; ++i) {
      const double v = cov_value(model, points[static_cast<std::size_t>(i)], points[static_cast<std::size_t>(j)]);
      out(i, j) = v;
      out(j, i) = v;
    }
  }
  return out;
}

// Rectangular taper matrix T(a_i, b_j); the pattern holds every pair whose kernels overlap.
[[nodiscard]] inline SparseMatrix taper_matrix(const PointSet& a, std::span<const double> ranges_a,
                                               std::span<const Point> b, std::span<const double> ranges_b,
                                               const TaperKind& kind) {
  validate(kind);
  if (ranges_a.size() != a.size() || ranges_b.size() != b.size()) throw ShapeError("taper_matrix: range count mismatch");
  const SupportMetric metric = support_metric(kind);
  const double max_a = ranges_a.empty() ? 0.0 : *std::max_element(ranges_a.begin(), ranges_a.end());
  std::vector<Triplet> entries;
  for (std::size_t j = 0; j < b.size(); ++j) {
    for (std::size_t i : a.within(b[j], 0.5 * (ranges_b[j] + max_a), metric)) {
      const double d = metric_distance(metric, a[i], b[j]);
      if (!within_support(d, ranges_a[i], ranges_b[j])) continue;
      entries.emplace_back(static_cast<int>(i), static_cast<int>(j),
                           evaluate_taper(kind, a[i], b[j], ranges_a[i], ranges_b[j]));
    }
  }
  SparseMatrix t(static_cast<Eigen::Index>(a.size()), static_cast<Eigen::Index>(b.size()));
  t.setFromTriplets(entries.begin(), entries.end());
  return t;
}

// Symmetric taper matrix on a single point set.
[[nodiscard]] inline SparseSymMatrix taper_matrix(const PointSet& points, std::span<const double> ranges,
                                                  const TaperKind& kind) {
  validate(kind);
  if (ranges.size() != points.size()) throw ShapeError("taper_matrix: range count mismatch");
  const SupportMetric metric = support_metric(kind);
  const double max_r = ranges.empty() ? 0.0 : *std::max_element(ranges.begin(), ranges.end());
  std::vector<Triplet> lower;
  for (std::size_t j = 0; j < points.size(); ++j) {
    for (std::size_t i : points.within(points[j], 0.5 * (ranges[j] + max_r), metric)) {
      if (i < j) continue;
      const double d = metric_distance(metric, points[i], points[j]);
      if (i != j && !within_support(d, ranges[i], ranges[j])) continue;
      const double v = i == j ? 1.0 : evaluate_taper(kind, points[i], points[j], ranges[i], ranges[j]);
      lower.emplace_back(static_cast<int>(i), static_cast<int>(j), v);
    }
  }
  return SparseSymMatrix::from_lower_triplets(static_cast<Eigen::Index>(points.size()), lower);
}

// Covariance times taper, evaluated only on the pattern of `taper`.
[[nodiscard]] inline SparseMatrix tapered_cov(std::span<const Point> a, std::span<const Point> b,
                                              const CovarianceModel& model, const SparseMatrix& taper) {
  validate(model);
  if (taper.rows() != static_cast<Eigen::Index>(a.size()) || taper.cols() != static_cast<Eigen::Index>(b.size())) {
    throw ShapeError("tapered_cov: taper shape does not match the point sets");
  }
  SparseMatrix out = taper;
  for (Eigen::Index j = 0; j < out.outerSize(); ++j) {
    for (SparseMatrix::InnerIterator it(out, j); it; ++it) {
      it.valueRef() *= cov_value(model, a[static_cast<std::size_t>(it.row())], b[static_cast<std::size_t>(j)]);
    }
  }
  return out;
}

[[nodiscard]] inline SparseSymMatrix tapered_cov(std::span<const Point> points, const CovarianceModel& model,
                                                 const SparseSymMatrix& taper) {
  return SparseSymMatrix(tapered_cov(points, points, model, taper.matrix()));
}

// dSigma/dpsi_i for every entry of psi (dense, no taper).
[[nodiscard]] inline std::vector<Eigen::MatrixXd> cov_param_derivatives(std::span<const Point> points,
                                                                        const CovarianceModel& model,
                                                                        const ParamVector& psi) {
  validate(model);
  const auto n = static_cast<Eigen::Index>(points.size());
  std::vector<Eigen::MatrixXd> out(psi.size(), Eigen::MatrixXd(n, n));
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = j; i < n; ++i) {
      const Eigen::VectorXd g =
          cov_gradient(model, psi, points[static_cast<std::size_t>(i)], points[static_cast<std::size_t>(j)]);
      for (std::size_t k = 0; k < psi.size(); ++k) {
        out[k](i, j) = g[static_cast<Eigen::Index>(k)];
        out[k](j, i) = g[static_cast<Eigen::Index>(k)];
      }
    }
  }
  return out;
}

// dSigma/dpsi_i o T, evaluated on the pattern of T only.
[[nodiscard]] inline std::vector<SparseSymMatrix> cov_param_derivatives(std::span<const Point> points,
                                                                        const CovarianceModel& model,
                                                                        const ParamVector& psi,
                                                                        const SparseSymMatrix& taper) {
  validate(model);
  if (taper.size() != static_cast<Eigen::Index>(points.size())) throw ShapeError("derivatives: taper shape mismatch");
  std::vector<SparseMatrix> mats(psi.size(), taper.matrix());
  const SparseMatrix& t = taper.matrix();
  for (Eigen::Index j = 0; j < t.outerSize(); ++j) {
    const int begin = t.outerIndexPtr()[j];
    const int end = t.outerIndexPtr()[j + 1];
    for (int p = begin; p < end; ++p) {
      const int i = t.innerIndexPtr()[p];
      // Evaluate with sorted indices so (i,j) and (j,i) are bit-identical.
      const auto lo = static_cast<std::size_t>(std::min<Eigen::Index>(i, j));
      const auto hi = static_cast<std::size_t>(std::max<Eigen::Index>(i, j));
      const Eigen::VectorXd g = cov_gradient(model, psi, points[hi], points[lo]);
      for (std::size_t k = 0; k < psi.size(); ++k) mats[k].valuePtr()[p] *= g[static_cast<Eigen::Index>(k)];
    }
  }
  std::vector<SparseSymMatrix> out;
  out.reserve(psi.size());
  for (auto& m : mats) out.emplace_back(std::move(m));
  return out;
}

}  // namespace adaptaper
