#pragma once

// Compactly supported tapers built as overlap integrals of compactly supported kernels.
//
// A taper T(s, t) = \int k_s(u) k_t(u) du is positive semi-definite by construction. With
// kernels normalized in L2 the taper equals 1 on the diagonal. Every taper here is
// parameterized by a kernel *diameter* theta(s), so two locations are coupled iff their
// distance is below (theta(s) + theta(t)) / 2.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <variant>

#include "adaptaper/errors.hpp"
#include "adaptaper/geometry.hpp"

namespace adaptaper {

namespace detail {

// Continued fraction for the incomplete beta function (modified Lentz).
inline double beta_continued_fraction(double x, double a, double b) {
  constexpr double tiny = 1e-300;
  constexpr double eps = 1e-16;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 10000; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < eps) return h;
  }
  return h;
}

}  // namespace detail

// Regularized incomplete beta function I_x(a, b) for a, b > 0.
[[nodiscard]] inline double regularized_incomplete_beta(double x, double a, double b) {
  if (!(x >= 0.0 && x <= 1.0)) throw DomainError("incomplete beta: x must lie in [0, 1]");
  if (!(a > 0.0 && b > 0.0)) throw DomainError("incomplete beta: shape parameters must be positive");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) +
                           b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return std::clamp(front * detail::beta_continued_fraction(x, a, b) / a, 0.0, 1.0);
  }
  return std::clamp(1.0 - front * detail::beta_continued_fraction(1.0 - x, b, a) / b, 0.0, 1.0);
}

// I_x((n+1)/2, 1/2), the normalized volume fraction of a hyperspherical cap in R^n.
[[nodiscard]] inline double regularized_incomplete_beta(double x, int n) {
  if (n < 1) throw DomainError("incomplete beta: dimension must be positive");
  return regularized_incomplete_beta(x, 0.5 * (n + 1), 0.5);
}

// Volume of the n-ball of radius r.
[[nodiscard]] inline double ball_volume(int n, double r) {
  if (n < 1) throw DomainError("ball volume: dimension must be positive");
  return std::exp(0.5 * n * std::log(std::numbers::pi) + n * std::log(r) - std::lgamma(0.5 * n + 1.0));
}

// Area of the circular cap cut off at signed height x from the centre of a disc of radius r.
[[nodiscard]] inline double circle_cap_area(double r, double x) {
  if (x >= r) return 0.0;
  if (x <= -r) return std::numbers::pi * r * r;
  return r * r * std::acos(x / r) - x * std::sqrt(r * r - x * x);
}

// Volume of the spherical cap cut off at signed height x from the centre of a ball of radius r.
[[nodiscard]] inline double sphere_cap_volume(double r, double x) {
  if (x >= r) return 0.0;
  if (x <= -r) return 4.0 / 3.0 * std::numbers::pi * r * r * r;
  return std::numbers::pi / 3.0 * (r - x) * (r - x) * (2.0 * r + x);
}

// Volume of the hyperspherical cap {u : |u| < r, u_1 > x} in R^n. Negative heights return the
// complement of the opposite cap, so the value runs continuously from the full ball at x = -r
// down to zero at x = r.
[[nodiscard]] inline double cap_volume(int n, double r, double x) {
  if (!(r > 0.0)) throw DomainError("cap volume: radius must be positive");
  const double full = ball_volume(n, r);
  if (x >= r) return 0.0;
  if (x <= -r) return full;
  const double t = 1.0 - (x / r) * (x / r);
  const double half_fraction = 0.5 * regularized_incomplete_beta(t, n);
  return x >= 0.0 ? full * half_fraction : full - full * half_fraction;
}

enum class OverlapBranch { containment, lens, disjoint };

// Which geometric case the pair of kernel balls falls into.
[[nodiscard]] inline OverlapBranch hyperspherical_branch(double theta_s, double theta_t, double d) {
  if (!(theta_s > 0.0 && theta_t > 0.0)) throw DomainError("taper ranges must be positive");
  if (!within_support(d, theta_s, theta_t)) return OverlapBranch::disjoint;
  const double r = 0.5 * std::min(theta_s, theta_t);
  const double big_r = 0.5 * std::max(theta_s, theta_t);
  if (d == 0.0 || d < big_r - r) return OverlapBranch::containment;
  return OverlapBranch::lens;
}

namespace detail {

inline double cap(int n, double r, double x) {
  switch (n) {
    case 1:
      return std::clamp(r - x, 0.0, 2.0 * r);
    case 2:
      return circle_cap_area(r, x);
    case 3:
      return sphere_cap_volume(r, x);
    default:
      return cap_volume(n, r, x);
  }
}

}  // namespace detail

// Non-stationary hyperspherical taper T_n: normalized volume of the intersection of two n-balls
// with diameters theta_s and theta_t whose centres are d apart.
[[nodiscard]] inline double hyperspherical_taper(int n, double theta_s, double theta_t, double d) {
  if (n < 1) throw DomainError("hyperspherical taper: dimension must be positive");
  if (d < 0.0) throw DomainError("hyperspherical taper: distance must be non-negative");
  const double r = 0.5 * std::min(theta_s, theta_t);
  const double big_r = 0.5 * std::max(theta_s, theta_t);
  switch (hyperspherical_branch(theta_s, theta_t, d)) {
    case OverlapBranch::disjoint:
      return 0.0;
    case OverlapBranch::containment:
      // The smaller ball lies inside the larger one.
      return std::pow(r / big_r, 0.5 * n);
    case OverlapBranch::lens:
      break;
  }
  const double x_big = (d * d + big_r * big_r - r * r) / (2.0 * d);
  const double x_small = (d * d + r * r - big_r * big_r) / (2.0 * d);
  const double overlap = detail::cap(n, big_r, x_big) + detail::cap(n, r, x_small);
  const double norm = std::sqrt(ball_volume(n, r) * ball_volume(n, big_r));
  return std::clamp(overlap / norm, 0.0, 1.0);
}

// Stationary isotropic special case ("Euclid's hat"): I_{1-(d/theta)^2}((n+1)/2, 1/2).
[[nodiscard]] inline double euclid_hat(int n, double d, double theta) {
  if (!(theta > 0.0)) throw DomainError("euclid hat: range must be positive");
  if (d < 0.0) throw DomainError("euclid hat: distance must be non-negative");
  if (d >= theta) return 0.0;
  const double q = d / theta;
  return regularized_incomplete_beta(1.0 - q * q, n);
}

// One-dimensional factor of the product taper: overlap of two order-m cardinal B-spline kernels
// with supports of width theta_s, theta_t centred at s and t.
[[nodiscard]] inline double product_taper_factor(int m, double s, double t, double theta_s, double theta_t) {
  if (m != 1 && m != 2) throw DomainError("product taper: order must be 1 or 2");
  if (!(theta_s > 0.0 && theta_t > 0.0)) throw DomainError("taper ranges must be positive");
  const double d = std::abs(s - t);
  if (!within_support(d, theta_s, theta_t)) return 0.0;
  const double r = 0.5 * std::min(theta_s, theta_t);
  const double big_r = 0.5 * std::max(theta_s, theta_t);
  if (m == 1) {
    const double overlap = std::min(2.0 * r, r + big_r - d);
    return std::clamp(overlap / (2.0 * std::sqrt(r * big_r)), 0.0, 1.0);
  }
  // Integral of the product of two hat functions with half-widths r <= R, as a piecewise cubic
  // in d; breakpoints at min(r, R-r), r, R-r, R and R+r.
  const double d2 = d * d;
  const double d3 = d2 * d;
  const double rs = r + big_r;
  const double rd = big_r - r;
  double poly = 0.0;
  if (d <= std::min(r, rd)) {
    poly = 2.0 * d3 - 6.0 * d2 * r + 2.0 * r * r * (3.0 * big_r - r);
  } else if (d <= r) {
    poly = 3.0 * (d3 - d2 * rs + r * big_r * rs + d * rd * rd) - big_r * big_r * big_r - r * r * r;
  } else if (d <= rd) {
    poly = 6.0 * r * r * (big_r - d);
  } else if (d <= big_r) {
    poly = 3.0 * ((r * big_r - d2) * rs + d * rd * rd) + r * r * r - big_r * big_r * big_r + d3 +
           6.0 * d * r * (d - r);
  } else {
    poly = 3.0 * ((d2 + r * big_r) * rs - d * rs * rs) + big_r * big_r * big_r + r * r * r - d3;
  }
  const double rr = r * big_r;
  return std::clamp(poly / (4.0 * rr * std::sqrt(rr)), 0.0, 1.0);
}

// Product taper over both coordinates. The range is shared by the two coordinates of a location.
[[nodiscard]] inline double product_taper(int m, Point s, Point t, double theta_s, double theta_t) {
  const double fx = product_taper_factor(m, s.x, t.x, theta_s, theta_t);
  if (fx == 0.0) return 0.0;
  return fx * product_taper_factor(m, s.y, t.y, theta_s, theta_t);
}

// Stationary Wendland taper (1 - d/theta)^4 (1 + 4 d/theta) on d < theta.
[[nodiscard]] inline double wendland_taper(double d, double theta) {
  if (!(theta > 0.0)) throw DomainError("wendland taper: range must be positive");
  if (d < 0.0) throw DomainError("wendland taper: distance must be non-negative");
  if (d >= theta) return 0.0;
  const double q = d / theta;
  const double a = 1.0 - q;
  return a * a * a * a * (1.0 + 4.0 * q);
}

// Taper families.
struct Hyperspherical {
  int n = 2;
};
struct Product {
  int m = 1;
};
struct Wendland {};
// 0/1 taper that keeps pairs in the same spatial block; built from a block assignment.
struct BlockDiagonal {};

using TaperKind = std::variant<Hyperspherical, Product, Wendland, BlockDiagonal>;

inline void validate(const TaperKind& kind) {
  if (const auto* h = std::get_if<Hyperspherical>(&kind); h && h->n < 1) {
    throw DomainError("hyperspherical taper: dimension must be positive");
  }
  if (const auto* p = std::get_if<Product>(&kind); p && p->m != 1 && p->m != 2) {
    throw DomainError("product taper: order must be 1 or 2");
  }
}

[[nodiscard]] inline SupportMetric support_metric(const TaperKind& kind) noexcept {
  return std::holds_alternative<Product>(kind) ? SupportMetric::chebyshev : SupportMetric::euclidean;
}

[[nodiscard]] inline std::string to_string(const TaperKind& kind) {
  return std::visit(
      [](const auto& k) -> std::string {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, Hyperspherical>) {
          return "hyperspherical(n=" + std::to_string(k.n) + ")";
        } else if constexpr (std::is_same_v<K, Product>) {
          return "product(m=" + std::to_string(k.m) + ")";
        } else if constexpr (std::is_same_v<K, Wendland>) {
          return "wendland";
        } else {
          return "block";
        }
      },
      kind);
}

// T(s, t) for location-specific ranges. Wendland is stationary; given two ranges it uses their
// mean, which keeps its support consistent with within_support().
[[nodiscard]] inline double evaluate_taper(const TaperKind& kind, Point s, Point t, double theta_s,
                                           double theta_t) {
  // Sort the ranges so that T(s,t) and T(t,s) run the exact same arithmetic.
  if (theta_t < theta_s) {
    std::swap(s, t);
    std::swap(theta_s, theta_t);
  }
  return std::visit(
      [&](const auto& k) -> double {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, Hyperspherical>) {
          return hyperspherical_taper(k.n, theta_s, theta_t, distance(s, t));
        } else if constexpr (std::is_same_v<K, Product>) {
          return product_taper(k.m, s, t, theta_s, theta_t);
        } else if constexpr (std::is_same_v<K, Wendland>) {
          return wendland_taper(distance(s, t), 0.5 * (theta_s + theta_t));
        } else {
          throw DomainError("block taper has no range-based evaluation; use block_pattern()");
        }
      },
      kind);
}

}  // namespace adaptaper
