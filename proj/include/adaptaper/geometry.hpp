#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include <boost/geometry.hpp>
#include <boost/geometry/geometries/box.hpp>
#include <boost/geometry/geometries/point.hpp>
#include <boost/geometry/index/rtree.hpp>

namespace adaptaper {

struct Point {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point&, const Point&) = default;
};

[[nodiscard]] inline double distance(Point a, Point b) noexcept {
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;
  return std::sqrt(dx * dx + dy * dy);
}

[[nodiscard]] inline double chebyshev_distance(Point a, Point b) noexcept {
  return std::max(std::abs(a.x - b.x), std::abs(a.y - b.y));
}

// Distance used to decide whether two kernels overlap. Isotropic kernels overlap when the
// Euclidean distance is below the mean range; coordinatewise product kernels use the max-norm.
enum class SupportMetric { euclidean, chebyshev };

[[nodiscard]] inline double metric_distance(SupportMetric metric, Point a, Point b) noexcept {
  return metric == SupportMetric::euclidean ? distance(a, b) : chebyshev_distance(a, b);
}

// True iff two kernels with diameters theta_s and theta_t centered `d` apart overlap.
// Shared by taper evaluation and sparsity accounting so both agree bit-for-bit.
[[nodiscard]] inline bool within_support(double d, double theta_s, double theta_t) noexcept {
  return d < 0.5 * (theta_s + theta_t);
}

// Ordered planar locations with an R-tree for neighbour queries. Immutable once built.
class PointSet {
  using BgPoint = boost::geometry::model::point<double, 2, boost::geometry::cs::cartesian>;
  using BgBox = boost::geometry::model::box<BgPoint>;
  using Entry = std::pair<BgPoint, std::size_t>;
  using Tree = boost::geometry::index::rtree<Entry, boost::geometry::index::rstar<16>>;

 public:
  PointSet() = default;

  explicit PointSet(std::vector<Point> points) : points_(std::move(points)) {
    std::vector<Entry> entries;
    entries.reserve(points_.size());
    for (std::size_t i = 0; i < points_.size(); ++i) {
      entries.emplace_back(BgPoint(points_[i].x, points_[i].y), i);
    }
    tree_ = Tree(entries.begin(), entries.end());
  }

  [[nodiscard]] std::size_t size() const noexcept { return points_.size(); }
  [[nodiscard]] bool empty() const noexcept { return points_.empty(); }
  [[nodiscard]] const Point& operator[](std::size_t i) const { return points_[i]; }
  [[nodiscard]] std::span<const Point> points() const noexcept { return points_; }
  [[nodiscard]] auto begin() const noexcept { return points_.begin(); }
  [[nodiscard]] auto end() const noexcept { return points_.end(); }

  // Indices of points whose metric distance to `center` is strictly below `radius`,
  // in increasing index order.
  [[nodiscard]] std::vector<std::size_t> within(Point center, double radius,
                                                SupportMetric metric = SupportMetric::euclidean) const {
    std::vector<std::size_t> out;
    if (!(radius > 0.0) || points_.empty()) return out;
    const BgBox box(BgPoint(center.x - radius, center.y - radius),
                    BgPoint(center.x + radius, center.y + radius));
    for (auto it = tree_.qbegin(boost::geometry::index::intersects(box)); it != tree_.qend(); ++it) {
      if (metric_distance(metric, center, points_[it->second]) < radius) out.push_back(it->second);
    }
    std::sort(out.begin(), out.end());
    return out;
  }

  // Index of the point closest to `p` (Euclidean); ties resolved by lowest index.
  [[nodiscard]] std::size_t nearest(Point p) const {
    if (points_.empty()) throw std::out_of_range("nearest: empty point set");
    std::vector<Entry> hits;
    tree_.query(boost::geometry::index::nearest(BgPoint(p.x, p.y), 1), std::back_inserter(hits));
    std::size_t best = hits.front().second;
    const double d = distance(p, points_[best]);
    // The R-tree returns an arbitrary member of a tie; normalize to the lowest index.
    for (auto idx : within(p, std::nextafter(d, HUGE_VAL))) {
      if (distance(p, points_[idx]) == d) {
        best = std::min(best, idx);
      }
    }
    return best;
  }

  // Largest pairwise Euclidean distance (O(N^2)).
  [[nodiscard]] double diameter() const noexcept {
    double best = 0.0;
    for (std::size_t i = 0; i < points_.size(); ++i) {
      for (std::size_t j = i + 1; j < points_.size(); ++j) {
        best = std::max(best, distance(points_[i], points_[j]));
      }
    }
    return best;
  }

 private:
  std::vector<Point> points_;
  Tree tree_;
};

}  // namespace adaptaper
