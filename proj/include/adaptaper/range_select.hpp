#pragma once

// Choosing taper ranges at the measurement locations.
//
// Row j of the taper matrix is non-zero at column l iff the kernels of s_j and s_l overlap,
// i.e. metric_distance(s_j, s_l) < (theta_j + theta_l) / 2. Equivalently theta_j exceeds the
// threshold 2 d(s_j, s_l) - theta_l, so sorting those thresholds tells exactly which theta_j
// yields k off-diagonal non-zeros in row j.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "adaptaper/errors.hpp"
#include "adaptaper/geometry.hpp"
#include "adaptaper/sparse.hpp"

namespace adaptaper {

using TaperRanges = std::vector<double>;

// Desired non-zeros per row (diagonal included) and their rounded total.
struct RowTargets {
  std::vector<double> m;
  long long total = 0;

  static RowTargets from_rows(std::vector<double> m) {
    const double sum = std::accumulate(m.begin(), m.end(), 0.0);
    return {std::move(m), std::llround(sum)};
  }
};

struct SelectionParams {
  double epsilon = 0.01;             // tolerated fraction of rows off target by more than one
  std::size_t max_iterations = 0;    // 0 selects 50 N
  std::uint64_t seed = 0;
  SupportMetric metric = SupportMetric::euclidean;
};

struct RangeSelection {
  TaperRanges theta;
  std::vector<int> counts;
  std::size_t iterations = 0;
};

namespace detail {

inline void check_ranges(const PointSet& points, std::span<const double> theta) {
  if (theta.size() != points.size()) throw ShapeError("taper range count does not match the number of points");
  for (double t : theta) {
    if (!(t > 0.0)) throw DomainError("taper ranges must be strictly positive");
  }
}

// Coupling thresholds 2 d(s_j, s_l) - theta_l for all l != j (unsorted).
inline std::vector<double> thresholds(const PointSet& points, std::span<const double> theta, std::size_t j,
                                      SupportMetric metric) {
  std::vector<double> t;
  t.reserve(points.size());
  for (std::size_t l = 0; l < points.size(); ++l) {
    if (l != j) t.push_back(2.0 * metric_distance(metric, points[j], points[l]) - theta[l]);
  }
  return t;
}

// Off-diagonal non-zeros of row j under the exact coupling predicate.
inline int row_offdiagonal(const PointSet& points, std::span<const double> theta, std::size_t j, double theta_j,
                           SupportMetric metric) {
  int count = 0;
  for (std::size_t l = 0; l < points.size(); ++l) {
    if (l != j && within_support(metric_distance(metric, points[j], points[l]), theta_j, theta[l])) ++count;
  }
  return count;
}

}  // namespace detail

// Non-zeros per row of the taper matrix implied by `theta`, diagonal included.
[[nodiscard]] inline std::vector<int> row_nonzero_counts(const PointSet& points, std::span<const double> theta,
                                                         SupportMetric metric = SupportMetric::euclidean) {
  detail::check_ranges(points, theta);
  const double max_theta = theta.empty() ? 0.0 : *std::max_element(theta.begin(), theta.end());
  std::vector<int> counts(points.size(), 1);
  for (std::size_t j = 0; j < points.size(); ++j) {
    for (std::size_t l : points.within(points[j], 0.5 * (theta[j] + max_theta), metric)) {
      if (l != j && within_support(metric_distance(metric, points[j], points[l]), theta[j], theta[l])) ++counts[j];
    }
  }
  return counts;
}

[[nodiscard]] inline long long total_nonzeros(std::span<const int> counts) {
  return std::accumulate(counts.begin(), counts.end(), 0LL);
}

// k-th smallest coupling threshold of row j (1-based k in [1, N-1]). Any theta_j strictly between
// the k-th and (k+1)-th thresholds gives row j exactly k off-diagonal non-zeros.
[[nodiscard]] inline double row_threshold(const PointSet& points, std::span<const double> theta, std::size_t j,
                                          std::size_t k, SupportMetric metric = SupportMetric::euclidean) {
  if (theta.size() != points.size()) throw ShapeError("taper range count does not match the number of points");
  if (j >= points.size()) throw std::out_of_range("row_threshold: row index out of range");
  if (k < 1 || k + 1 > points.size()) throw std::out_of_range("row_threshold: neighbour rank out of range");
  auto t = detail::thresholds(points, theta, j, metric);
  std::nth_element(t.begin(), t.begin() + static_cast<std::ptrdiff_t>(k - 1), t.end());
  return t[k - 1];
}

// Largest constant range whose pattern has the largest total count not exceeding `total`.
// The count is a step function of theta that jumps at pairwise distances, so sorting those
// distances gives the answer exactly.
[[nodiscard]] inline double stationary_range_for_density(const PointSet& points, long long total,
                                                         SupportMetric metric = SupportMetric::euclidean) {
  const auto n = static_cast<long long>(points.size());
  if (n == 0) throw DomainError("stationary range: empty point set");
  if (total < n || total > n * n) throw DomainError("stationary range: total non-zeros must lie in [N, N^2]");
  std::vector<double> d;
  d.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  for (std::size_t i = 0; i < points.size(); ++i) {
    for (std::size_t j = i + 1; j < points.size(); ++j) d.push_back(metric_distance(metric, points[i], points[j]));
  }
  const auto pairs = static_cast<std::size_t>((total - n) / 2);
  if (pairs >= d.size()) {
    const double dmax = d.empty() ? 0.0 : *std::max_element(d.begin(), d.end());
    return dmax > 0.0 ? std::nextafter(dmax, std::numeric_limits<double>::infinity()) : 1.0;
  }
  std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(pairs), d.end());
  const double theta = d[pairs];
  if (!(theta > 0.0)) throw DomainError("stationary range: requested density unreachable (coincident points)");
  return theta;
}

// Blend of stationary row counts and the uniform target mean(m_s): (1 - alpha) m_s + alpha mean.
[[nodiscard]] inline RowTargets blend_targets(std::span<const double> stationary_counts, double mean_count,
                                              double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw DomainError("alpha must lie in [0, 1]");
  std::vector<double> m(stationary_counts.size());
  for (std::size_t j = 0; j < m.size(); ++j) m[j] = (1.0 - alpha) * stationary_counts[j] + alpha * mean_count;
  return RowTargets::from_rows(std::move(m));
}

// Targets trading off stationary tapering (alpha = 0) against fully adaptive tapering (alpha = 1)
// at a total of `total` non-zeros. The stationary pattern is the densest one not exceeding
// `total`; its count M' is used for both ends so the target total is M' for every alpha.
[[nodiscard]] inline RowTargets alpha_adaptive_targets(const PointSet& points, long long total, double alpha,
                                                       SupportMetric metric = SupportMetric::euclidean) {
  const auto n = static_cast<long long>(points.size());
  if (total < n) throw DomainError("alpha_adaptive_targets: fewer non-zeros than diagonal entries");
  const double theta = stationary_range_for_density(points, total, metric);
  const std::vector<double> constant(points.size(), theta);
  const auto counts = row_nonzero_counts(points, constant, metric);
  const std::vector<double> ms(counts.begin(), counts.end());
  const double mean = static_cast<double>(total_nonzeros(counts)) / static_cast<double>(n);
  return blend_targets(ms, mean, alpha);
}

namespace detail {

struct Bracket {
  double lower;
  double upper;
};

// Open interval of theta_j giving `count` non-zeros in row j (diagonal included), if any.
inline std::optional<Bracket> bracket_for_count(const std::vector<double>& sorted_thresholds, int count) {
  const auto k = static_cast<std::size_t>(count - 1);
  const std::size_t n_off = sorted_thresholds.size();
  if (count < 1 || k > n_off) return std::nullopt;
  double lower = k == 0 ? 0.0 : std::max(0.0, sorted_thresholds[k - 1]);
  double upper = 0.0;
  if (k < n_off) {
    upper = sorted_thresholds[k];
  } else {
    upper = lower + std::max(lower, 1e-12);
  }
  if (!(upper > lower) || std::nextafter(lower, upper) >= upper) return std::nullopt;
  return Bracket{lower, upper};
}

}  // namespace detail

// Chooses theta so that every row of the taper matrix has close to m_j non-zeros while the total
// stays at the target. Each iteration resets the range of one row (the most over- or
// under-populated one, depending on whether the total is too high or too low) to a uniform draw
// inside the threshold bracket that gives that row its target count. A final sweep raises every
// range to the largest value that keeps its row count unchanged.
[[nodiscard]] inline RangeSelection theta_set_detailed(const RowTargets& targets, TaperRanges theta,
                                                       const PointSet& points, const SelectionParams& params) {
  const std::size_t n = points.size();
  detail::check_ranges(points, theta);
  if (targets.m.size() != n) throw ShapeError("theta_set: target count does not match the number of points");
  if (!(params.epsilon >= 0.0 && params.epsilon < 1.0)) throw DomainError("theta_set: epsilon must lie in [0, 1)");
  for (double m : targets.m) {
    if (!(m >= 1.0) || m > static_cast<double>(n)) throw DomainError("theta_set: row targets must lie in [1, N]");
  }
  const SupportMetric metric = params.metric;
  if (std::all_of(targets.m.begin(), targets.m.end(), [n](double m) { return m == static_cast<double>(n); })) {
    // Every row wants every neighbour: the complete pattern is the only fixed point.
    double diameter = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t l = i + 1; l < n; ++l) diameter = std::max(diameter, metric_distance(metric, points[i], points[l]));
    }
    const double range = diameter > 0.0 ? 2.0 * diameter : 1.0;
    return {TaperRanges(n, range), std::vector<int>(n, static_cast<int>(n)), 0};
  }
  const std::size_t max_iterations = params.max_iterations == 0 ? 50 * n : params.max_iterations;
  const long long goal = targets.total;
  const double tolerance_total = std::max(static_cast<double>(n) * params.epsilon, 2.0);
  const double tolerance_rows = static_cast<double>(n) * params.epsilon;

  std::mt19937_64 rng(params.seed);
  std::vector<int> counts = row_nonzero_counts(points, theta, metric);
  long long total = total_nonzeros(counts);

  auto violations = [&] {
    std::size_t v = 0;
    for (std::size_t l = 0; l < n; ++l) v += std::abs(counts[l] - targets.m[l]) > 1.0;
    return v;
  };

  std::size_t best_violations = violations();
  TaperRanges best = theta;
  std::size_t iteration = 0;
  std::vector<double> dev(n);
  std::vector<std::size_t> candidates;
  for (;;) {
    const std::size_t v = violations();
    if (v < best_violations) {
      best_violations = v;
      best = theta;
    }
    if (static_cast<double>(v) <= tolerance_rows && std::abs(static_cast<double>(total - goal)) <= tolerance_total) break;
    if (iteration == max_iterations) {
      throw ConvergenceError("theta_set: no convergence after " + std::to_string(max_iterations) + " iterations",
                             best, static_cast<double>(best_violations));
    }
    ++iteration;

    for (std::size_t l = 0; l < n; ++l) dev[l] = counts[l] - targets.m[l];
    const auto [min_it, max_it] = std::minmax_element(dev.begin(), dev.end());
    bool shrink = false;
    if (total > goal) {
      shrink = true;
    } else if (total == goal) {
      shrink = *max_it > std::abs(*min_it);
    }
    const double chosen = shrink ? *max_it : *min_it;
    candidates.clear();
    for (std::size_t l = 0; l < n; ++l) {
      if (dev[l] == chosen) candidates.push_back(l);
    }
    const std::size_t j = candidates[std::uniform_int_distribution<std::size_t>(0, candidates.size() - 1)(rng)];

    // Overshooting in the direction of the total error pulls the total towards the goal;
    // otherwise the smallest correction that brings the row within one of its target.
    const double mj = targets.m[j];
    int want = 0;
    if (shrink) {
      want = total > goal ? static_cast<int>(std::floor(mj)) : static_cast<int>(std::ceil(mj));
    } else {
      want = total < goal ? static_cast<int>(std::ceil(mj)) : static_cast<int>(std::floor(mj));
    }
    want = std::clamp(want, 1, static_cast<int>(n));

    auto t = detail::thresholds(points, theta, j, metric);
    std::sort(t.begin(), t.end());
    // Counts are tried in order of distance from `want`, overshooting in the direction of the
    // correction first. Neighbours sitting on the coupling boundary of row j make some counts
    // unreachable (a bracket a few ulps wide), in which case the row steps past them.
    std::optional<double> candidate;
    for (int delta = 0; !candidate && delta <= static_cast<int>(n); ++delta) {
      const int first = shrink ? want - delta : want + delta;
      const int second = shrink ? want + delta : want - delta;
      for (int c : {first, second}) {
        if (candidate || (delta == 0 && c != want)) continue;
        const auto bracket = detail::bracket_for_count(t, c);
        if (!bracket) continue;
        std::uniform_real_distribution<double> draw(bracket->lower, bracket->upper);
        for (int attempt = 0; attempt < 64 && !candidate; ++attempt) {
          const double x = attempt == 63 ? 0.5 * (bracket->lower + bracket->upper) : draw(rng);
          if (x > bracket->lower && detail::row_offdiagonal(points, theta, j, x, metric) + 1 == c) candidate = x;
        }
      }
    }
    if (!candidate) throw std::logic_error("theta_set: no feasible range for row " + std::to_string(j));

    const double old_theta = theta[j];
    for (std::size_t l = 0; l < n; ++l) {
      if (l == j) continue;
      const double d = metric_distance(metric, points[j], points[l]);
      const bool before = within_support(d, old_theta, theta[l]);
      const bool after = within_support(d, *candidate, theta[l]);
      if (before != after) {
        const int step = after ? 1 : -1;
        counts[j] += step;
        counts[l] += step;
        total += 2 * step;
      }
    }
    theta[j] = *candidate;
  }

  // Final sweep: widen each range up to the next coupling threshold.
  for (std::size_t j = 0; j < n; ++j) {
    if (counts[j] == static_cast<int>(n)) continue;
    auto t = detail::thresholds(points, theta, j, metric);
    const auto k = static_cast<std::size_t>(counts[j] - 1);
    std::nth_element(t.begin(), t.begin() + static_cast<std::ptrdiff_t>(k), t.end());
    double widened = std::max(theta[j], t[k]);
    const int off = counts[j] - 1;
    while (widened > theta[j] && detail::row_offdiagonal(points, theta, j, widened, metric) != off) {
      widened = std::nextafter(widened, 0.0);
    }
    // The threshold is computed in a different order than the coupling test; close the gap of
    // a few ulps so that the next representable range really adds a neighbour.
    const double inf = std::numeric_limits<double>::infinity();
    for (int step = 0; step < 64; ++step) {
      const double up = std::nextafter(widened, inf);
      if (detail::row_offdiagonal(points, theta, j, up, metric) != off) break;
      widened = up;
    }
    theta[j] = widened;
  }
  return {std::move(theta), std::move(counts), iteration};
}

[[nodiscard]] inline TaperRanges theta_set(const RowTargets& targets, TaperRanges theta0, const PointSet& points,
                                           const SelectionParams& params) {
  return theta_set_detailed(targets, std::move(theta0), points, params).theta;
}

// Fully adaptive ranges matching the density of a stationary range: targets M/N per row where M is
// the stationary count (measured with the Euclidean pattern, as for the stationary tapers).
[[nodiscard]] inline RangeSelection adaptive_ranges_for_stationary(const PointSet& points, double stationary_range,
                                                                   const SelectionParams& params) {
  const std::vector<double> constant(points.size(), stationary_range);
  const long long total = total_nonzeros(row_nonzero_counts(points, constant, SupportMetric::euclidean));
  const double mean = static_cast<double>(total) / static_cast<double>(points.size());
  RowTargets targets{std::vector<double>(points.size(), mean), total};
  const double theta0 = stationary_range_for_density(points, total, params.metric);
  return theta_set_detailed(targets, TaperRanges(points.size(), theta0), points, params);
}

struct BestEffortSelection {
  TaperRanges theta;
  int rows_off_target = 0;  // rows more than one off target; 0 when the selection converged
};

// As adaptive_ranges_for_stationary, but a selection that stalls short of the row tolerance keeps
// its best iterate. Any ranges give a valid taper, so this suits prediction, where a few rows a
// little off target cost almost nothing.
[[nodiscard]] inline BestEffortSelection adaptive_ranges_best_effort(const PointSet& points, double stationary_range,
                                                                    const SelectionParams& params) {
  try {
    return {adaptive_ranges_for_stationary(points, stationary_range, params).theta, 0};
  } catch (const ConvergenceError& e) {
    return {e.best(), static_cast<int>(e.score())};
  }
}

// ---------------------------------------------------------------------------------------------
// Block tapering

struct SquareDomain {
  double x0 = 0.0;
  double y0 = 0.0;
  double side = 1.0;
};

// Block id of every point for a regular blocks_per_side x blocks_per_side partition of `domain`.
[[nodiscard]] inline std::vector<int> block_assignment(const PointSet& points, int blocks_per_side,
                                                       SquareDomain domain = {}) {
  if (blocks_per_side < 1) throw DomainError("block_assignment: need at least one block per side");
  std::vector<int> ids(points.size());
  auto cell = [&](double v, double origin) {
    const auto c = static_cast<int>(std::floor((v - origin) / domain.side * blocks_per_side));
    return std::clamp(c, 0, blocks_per_side - 1);
  };
  for (std::size_t i = 0; i < points.size(); ++i) {
    ids[i] = cell(points[i].x, domain.x0) + blocks_per_side * cell(points[i].y, domain.y0);
  }
  return ids;
}

// 0/1 pattern keeping exactly the pairs that share a block.
[[nodiscard]] inline SparseSymMatrix block_pattern(std::span<const int> block_ids) {
  const int n = static_cast<int>(block_ids.size());
  int max_id = 0;
  for (int b : block_ids) {
    if (b < 0) throw DomainError("block_pattern: negative block id");
    max_id = std::max(max_id, b);
  }
  std::vector<std::vector<int>> members(static_cast<std::size_t>(max_id) + 1);
  for (int i = 0; i < n; ++i) members[static_cast<std::size_t>(block_ids[static_cast<std::size_t>(i)])].push_back(i);
  std::vector<Triplet> lower;
  for (const auto& block : members) {
    for (std::size_t a = 0; a < block.size(); ++a) {
      for (std::size_t b = 0; b <= a; ++b) lower.emplace_back(block[a], block[b], 1.0);
    }
  }
  return SparseSymMatrix::from_lower_triplets(n, lower);
}

[[nodiscard]] inline SparseSymMatrix block_pattern(const PointSet& points, int blocks_per_side,
                                                   SquareDomain domain = {}) {
  return block_pattern(block_assignment(points, blocks_per_side, domain));
}

// Blocks per side whose pattern size is closest to `total` (searched over 1..max_side).
[[nodiscard]] inline int blocks_for_density(const PointSet& points, long long total, int max_side = 64,
                                            SquareDomain domain = {}) {
  int best = 1;
  long long best_gap = std::numeric_limits<long long>::max();
  for (int b = 1; b <= max_side; ++b) {
    const auto ids = block_assignment(points, b, domain);
    std::vector<long long> sizes(static_cast<std::size_t>(b * b), 0);
    for (int id : ids) ++sizes[static_cast<std::size_t>(id)];
    long long count = 0;
    for (long long s : sizes) count += s * s;
    const long long gap = std::llabs(count - total);
    if (gap < best_gap) {
      best_gap = gap;
      best = b;
    }
  }
  return best;
}

}  // namespace adaptaper
