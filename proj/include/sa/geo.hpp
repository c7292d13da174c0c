// Planar and 3D geometric primitives in a local East-North-Up frame.
//
// Units are meters, z is up and the ground is the plane z = 0. Every
// predicate is closed: boundaries count as contained/intersecting. No
// epsilons are used anywhere in this header.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace sa {

class GeometryError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Point2 {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point2&, const Point2&) = default;
};

struct Point3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  Point2 ground() const { return {x, y}; }

  friend bool operator==(const Point3&, const Point3&) = default;
};

/// Image/screen position: origin top-left, +x right, +y down.
struct PixelPoint {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const PixelPoint&, const PixelPoint&) = default;
};

inline Point2 operator+(Point2 a, Point2 b) { return {a.x + b.x, a.y + b.y}; }
inline Point2 operator-(Point2 a, Point2 b) { return {a.x - b.x, a.y - b.y}; }
inline Point2 operator*(double s, Point2 a) { return {s * a.x, s * a.y}; }
inline double dot(Point2 a, Point2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Point2 a, Point2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Point2 a) { return std::hypot(a.x, a.y); }
inline double distance(Point2 a, Point2 b) { return norm(a - b); }

inline Point3 operator+(Point3 a, Point3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
inline Point3 operator-(Point3 a, Point3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
inline Point3 operator*(double s, Point3 a) { return {s * a.x, s * a.y, s * a.z}; }
inline double dot(Point3 a, Point3 b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline Point3 cross(Point3 a, Point3 b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline double norm(Point3 a) { return std::sqrt(dot(a, a)); }
inline double distance(Point3 a, Point3 b) { return norm(a - b); }

inline bool is_finite(Point2 p) { return std::isfinite(p.x) && std::isfinite(p.y); }
inline bool is_finite(Point3 p) {
  return std::isfinite(p.x) && std::isfinite(p.y) && std::isfinite(p.z);
}

/// Throws GeometryError unless every coordinate is finite.
inline Point3 checked(Point3 p) {
  if (!is_finite(p)) throw GeometryError("point has non-finite coordinate");
  return p;
}

struct Disc2 {
  Point2 center;
  double radius = 0.0;

  static Disc2 make(Point2 center, double radius) {
    if (!is_finite(center) || !(radius >= 0.0) || !std::isfinite(radius)) {
      throw GeometryError("disc radius must be finite and >= 0");
    }
    return {center, radius};
  }
};

/// Distance from p to the closed segment ab.
///
/// The endpoints are put into lexicographic order first so that the result
/// is bit-identical for ab and ba.
inline double distance_point_segment(Point2 p, Point2 a, Point2 b) {
  if (b.x < a.x || (b.x == a.x && b.y < a.y)) std::swap(a, b);
  const Point2 ab = b - a;
  const double len2 = dot(ab, ab);
  if (len2 == 0.0) return distance(p, a);
  const double t = std::clamp(dot(p - a, ab) / len2, 0.0, 1.0);
  return distance(p, a + t * ab);
}

/// True iff p lies on the closed segment ab (exact arithmetic on the inputs).
inline bool on_segment(Point2 p, Point2 a, Point2 b) {
  if (cross(b - a, p - a) != 0.0) return false;
  return std::min(a.x, b.x) <= p.x && p.x <= std::max(a.x, b.x) &&
         std::min(a.y, b.y) <= p.y && p.y <= std::max(a.y, b.y);
}

namespace detail {

inline int orientation(Point2 a, Point2 b, Point2 c) {
  const double v = cross(b - a, c - a);
  return (v > 0.0) - (v < 0.0);
}

inline bool segments_intersect(Point2 a, Point2 b, Point2 c, Point2 d) {
  const int o1 = orientation(a, b, c);
  const int o2 = orientation(a, b, d);
  const int o3 = orientation(c, d, a);
  const int o4 = orientation(c, d, b);
  if (o1 != o2 && o3 != o4) return true;
  return (o1 == 0 && on_segment(c, a, b)) || (o2 == 0 && on_segment(d, a, b)) ||
         (o3 == 0 && on_segment(a, c, d)) || (o4 == 0 && on_segment(b, c, d));
}

}  // namespace detail

/// Simple, counter-clockwise polygon with at least three vertices.
class Polygon2 {
 public:
  explicit Polygon2(std::vector<Point2> vertices) : vertices_(std::move(vertices)) {
    const std::size_t n = vertices_.size();
    if (n < 3) throw GeometryError("polygon needs at least 3 vertices");
    for (const auto& v : vertices_) {
      if (!is_finite(v)) throw GeometryError("polygon vertex is not finite");
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (vertices_[i] == vertices_[(i + 1) % n]) {
        throw GeometryError("polygon has repeated consecutive vertex");
      }
    }
    const double area = signed_area();
    if (area == 0.0) throw GeometryError("polygon is degenerate (zero area)");
    if (area < 0.0) throw GeometryError("polygon must be counter-clockwise");
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        const bool adjacent = j == i + 1 || (i == 0 && j == n - 1);
        if (adjacent) continue;
        if (detail::segments_intersect(vertices_[i], vertices_[(i + 1) % n], vertices_[j],
                                       vertices_[(j + 1) % n])) {
          throw GeometryError("polygon is not simple");
        }
      }
    }
  }

  const std::vector<Point2>& vertices() const { return vertices_; }
  std::size_t size() const { return vertices_.size(); }
  Point2 vertex(std::size_t i) const { return vertices_[i % vertices_.size()]; }

  double signed_area() const {
    double twice = 0.0;
    for (std::size_t i = 0; i < vertices_.size(); ++i) {
      twice += cross(vertex(i), vertex(i + 1));
    }
    return 0.5 * twice;
  }

  friend bool operator==(const Polygon2&, const Polygon2&) = default;

 private:
  std::vector<Point2> vertices_;
};

/// Open polyline with at least two vertices and no zero-length segments.
class Polyline2 {
 public:
  explicit Polyline2(std::vector<Point2> vertices) : vertices_(std::move(vertices)) {
    if (vertices_.size() < 2) throw GeometryError("polyline needs at least 2 vertices");
    for (std::size_t i = 0; i < vertices_.size(); ++i) {
      if (!is_finite(vertices_[i])) throw GeometryError("polyline vertex is not finite");
      if (i > 0 && vertices_[i] == vertices_[i - 1]) {
        throw GeometryError("polyline has repeated consecutive vertex");
      }
    }
  }

  const std::vector<Point2>& vertices() const { return vertices_; }
  std::size_t size() const { return vertices_.size(); }

  friend bool operator==(const Polyline2&, const Polyline2&) = default;

 private:
  std::vector<Point2> vertices_;
};

struct Aabb3 {
  Point3 min;
  Point3 max;

  static Aabb3 make(Point3 lo, Point3 hi) {
    if (!is_finite(lo) || !is_finite(hi)) throw GeometryError("box corner is not finite");
    if (lo.x > hi.x || lo.y > hi.y || lo.z > hi.z) {
      throw GeometryError("box min must be <= max on every axis");
    }
    return {lo, hi};
  }

  bool contains(Point3 p) const {
    return min.x <= p.x && p.x <= max.x && min.y <= p.y && p.y <= max.y && min.z <= p.z &&
           p.z <= max.z;
  }

  friend bool operator==(const Aabb3&, const Aabb3&) = default;
};

/// Closed containment: boundary points are inside.
inline bool point_in_polygon(Point2 p, const Polygon2& poly) {
  const std::size_t n = poly.size();
  bool inside = false;
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Point2 a = poly.vertex(i);
    const Point2 b = poly.vertex(j);
    if (on_segment(p, a, b)) return true;
    if ((a.y > p.y) != (b.y > p.y)) {
      const double x_cross = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
      if (p.x < x_cross) inside = !inside;
    }
  }
  return inside;
}

inline double distance_to_boundary(Point2 p, const Polygon2& poly) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < poly.size(); ++i) {
    best = std::min(best, distance_point_segment(p, poly.vertex(i), poly.vertex(i + 1)));
  }
  return best;
}

inline bool disc_intersects_polygon(const Disc2& d, const Polygon2& poly) {
  return point_in_polygon(d.center, poly) || distance_to_boundary(d.center, poly) <= d.radius;
}

inline double distance_point_polyline(Point2 p, const Polyline2& line) {
  const auto& v = line.vertices();
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i + 1 < v.size(); ++i) {
    best = std::min(best, distance_point_segment(p, v[i], v[i + 1]));
  }
  return best;
}

inline bool discs_intersect(const Disc2& a, const Disc2& b) {
  return distance(a.center, b.center) <= a.radius + b.radius;
}

/// Parametric clip of the line a + t(b - a) against a closed box.
///
/// Returns the [t_enter, t_exit] interval (unclamped) or an empty pair with
/// enter > exit when the supporting line misses the box.
inline std::pair<double, double> clip_line_aabb(Point3 a, Point3 b, const Aabb3& box) {
  double t0 = -std::numeric_limits<double>::infinity();
  double t1 = std::numeric_limits<double>::infinity();
  const double origin[3] = {a.x, a.y, a.z};
  const double dir[3] = {b.x - a.x, b.y - a.y, b.z - a.z};
  const double lo[3] = {box.min.x, box.min.y, box.min.z};
  const double hi[3] = {box.max.x, box.max.y, box.max.z};
  for (int axis = 0; axis < 3; ++axis) {
    if (dir[axis] == 0.0) {
      if (origin[axis] < lo[axis] || origin[axis] > hi[axis]) return {1.0, 0.0};
      continue;
    }
    double ta = (lo[axis] - origin[axis]) / dir[axis];
    double tb = (hi[axis] - origin[axis]) / dir[axis];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (t0 > t1) return {1.0, 0.0};
  }
  return {t0, t1};
}

/// Closed segment ab against a closed box (slab test).
inline bool segment_intersects_aabb3(Point3 a, Point3 b, const Aabb3& box) {
  const auto [enter, exit] = clip_line_aabb(a, b, box);
  return enter <= exit && enter <= 1.0 && exit >= 0.0;
}

}  // namespace sa
