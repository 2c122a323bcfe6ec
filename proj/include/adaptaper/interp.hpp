#pragma once

// Continuous taper-range field: piecewise-linear interpolation of per-location ranges on the
// Delaunay triangulation of the locations, nearest-vertex value outside the convex hull.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include <boost/geometry.hpp>
#include <boost/geometry/geometries/box.hpp>
#include <boost/geometry/geometries/multi_point.hpp>
#include <boost/geometry/geometries/point.hpp>
#include <boost/geometry/geometries/polygon.hpp>
#include <boost/geometry/index/rtree.hpp>
#include <boost/polygon/voronoi.hpp>

#include "adaptaper/errors.hpp"
#include "adaptaper/geometry.hpp"

namespace adaptaper {

using Triangle = std::array<std::size_t, 3>;

namespace detail {

inline double orient(Point a, Point b, Point c) noexcept {
  return (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
}

// Delaunay triangles (counter-clockwise, indices into `points`) from the dual of a Voronoi
// diagram computed on integer-snapped coordinates. Points that snap together are merged and
// represented by their lowest index.
inline std::vector<Triangle> delaunay(std::span<const Point> points) {
  using IPoint = boost::polygon::point_data<int>;
  double xmin = std::numeric_limits<double>::infinity(), ymin = xmin;
  double xmax = -xmin, ymax = -xmin;
  for (const auto& p : points) {
    xmin = std::min(xmin, p.x);
    xmax = std::max(xmax, p.x);
    ymin = std::min(ymin, p.y);
    ymax = std::max(ymax, p.y);
  }
  const double extent = std::max({xmax - xmin, ymax - ymin, std::numeric_limits<double>::min()});
  const double scale = static_cast<double>(1 << 28) / extent;

  std::map<std::pair<int, int>, std::size_t> seen;
  std::vector<IPoint> sites;
  std::vector<std::size_t> site_index;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto qx = static_cast<int>(std::lround((points[i].x - xmin) * scale));
    const auto qy = static_cast<int>(std::lround((points[i].y - ymin) * scale));
    if (seen.emplace(std::pair{qx, qy}, i).second) {
      sites.emplace_back(qx, qy);
      site_index.push_back(i);
    }
  }

  boost::polygon::voronoi_diagram<double> vd;
  boost::polygon::construct_voronoi(sites.begin(), sites.end(), &vd);

  std::vector<Triangle> triangles;
  std::vector<std::size_t> ring;
  for (const auto& vertex : vd.vertices()) {
    ring.clear();
    const auto* edge = vertex.incident_edge();
    do {
      ring.push_back(site_index[edge->cell()->source_index()]);
      edge = edge->rot_next();
    } while (edge != vertex.incident_edge());
    for (std::size_t k = 1; k + 1 < ring.size(); ++k) {
      Triangle t{ring[0], ring[k], ring[k + 1]};
      const double o = orient(points[t[0]], points[t[1]], points[t[2]]);
      if (o == 0.0) continue;
      if (o < 0.0) std::swap(t[1], t[2]);
      triangles.push_back(t);
    }
  }
  return triangles;
}

}  // namespace detail

class TaperRangeField {
  using BgPoint = boost::geometry::model::point<double, 2, boost::geometry::cs::cartesian>;
  using BgBox = boost::geometry::model::box<BgPoint>;
  using Entry = std::pair<BgBox, std::size_t>;
  using Tree = boost::geometry::index::rtree<Entry, boost::geometry::index::rstar<16>>;

 public:
  TaperRangeField(PointSet vertices, std::vector<double> values) : vertices_(std::move(vertices)), values_(std::move(values)) {
    if (values_.size() != vertices_.size()) throw ShapeError("range field: value count does not match point count");
    if (vertices_.size() < 3) throw DomainError("range field: need at least three points");
    for (double v : values_) {
      if (!(v > 0.0) || !std::isfinite(v)) throw DomainError("range field: values must be finite and positive");
    }
    triangles_ = detail::delaunay(vertices_.points());
    if (triangles_.empty()) throw DomainError("range field: points are collinear");

    std::vector<Entry> boxes;
    boxes.reserve(triangles_.size());
    for (std::size_t k = 0; k < triangles_.size(); ++k) {
      const auto& t = triangles_[k];
      double x0 = vertices_[t[0]].x, x1 = x0, y0 = vertices_[t[0]].y, y1 = y0;
      for (std::size_t v : {t[1], t[2]}) {
        x0 = std::min(x0, vertices_[v].x);
        x1 = std::max(x1, vertices_[v].x);
        y0 = std::min(y0, vertices_[v].y);
        y1 = std::max(y1, vertices_[v].y);
      }
      boxes.emplace_back(BgBox(BgPoint(x0, y0), BgPoint(x1, y1)), k);
    }
    tree_ = Tree(boxes.begin(), boxes.end());

    boost::geometry::model::multi_point<BgPoint> cloud;
    for (const auto& p : vertices_) cloud.emplace_back(p.x, p.y);
    boost::geometry::model::polygon<BgPoint> hull;
    boost::geometry::convex_hull(cloud, hull);
    for (const auto& p : hull.outer()) hull_.push_back({boost::geometry::get<0>(p), boost::geometry::get<1>(p)});
  }

  [[nodiscard]] const PointSet& vertices() const noexcept { return vertices_; }
  [[nodiscard]] const std::vector<double>& values() const noexcept { return values_; }
  [[nodiscard]] const std::vector<Triangle>& triangles() const noexcept { return triangles_; }
  // Closed ring of hull vertices (first point repeated at the end).
  [[nodiscard]] const std::vector<Point>& hull() const noexcept { return hull_; }

  // Triangle containing `s` with its barycentric weights, if `s` lies in the hull.
  [[nodiscard]] std::optional<std::pair<std::size_t, std::array<double, 3>>> locate(Point s) const {
    std::optional<std::pair<std::size_t, std::array<double, 3>>> best;
    double best_margin = -std::numeric_limits<double>::infinity();
    for (auto it = tree_.qbegin(boost::geometry::index::intersects(BgPoint(s.x, s.y))); it != tree_.qend(); ++it) {
      const auto& t = triangles_[it->second];
      const Point a = vertices_[t[0]], b = vertices_[t[1]], c = vertices_[t[2]];
      const double area = detail::orient(a, b, c);
      const std::array<double, 3> w{detail::orient(s, b, c) / area, detail::orient(a, s, c) / area,
                                    detail::orient(a, b, s) / area};
      const double margin = std::min({w[0], w[1], w[2]});
      if (margin > best_margin) {
        best_margin = margin;
        best.emplace(it->second, w);
      }
    }
    if (!best || best_margin < -1e-12) return std::nullopt;
    auto& w = best->second;
    double total = 0.0;
    for (double& x : w) {
      x = std::max(x, 0.0);
      total += x;
    }
    for (double& x : w) x /= total;
    return best;
  }

  [[nodiscard]] double operator()(Point s) const {
    const std::size_t near = vertices_.nearest(s);
    if (vertices_[near] == s) return values_[near];
    if (auto hit = locate(s)) {
      const auto& t = triangles_[hit->first];
      const auto& w = hit->second;
      return w[0] * values_[t[0]] + w[1] * values_[t[1]] + w[2] * values_[t[2]];
    }
    return values_[near];
  }

 private:
  PointSet vertices_;
  std::vector<double> values_;
  std::vector<Triangle> triangles_;
  std::vector<Point> hull_;
  Tree tree_;
};

[[nodiscard]] inline TaperRangeField build_range_field(const PointSet& points, std::span<const double> theta) {
  return TaperRangeField(points, std::vector<double>(theta.begin(), theta.end()));
}

[[nodiscard]] inline double eval_range(const TaperRangeField& field, Point s) { return field(s); }

[[nodiscard]] inline std::vector<double> eval_range(const TaperRangeField& field, std::span<const Point> s) {
  std::vector<double> out(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) out[i] = field(s[i]);
  return out;
}

}  // namespace adaptaper
