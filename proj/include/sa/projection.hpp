// Camera-to-terrain projection for the command console: zoom to field of
// view, pinhole projection, and plane-to-image homographies for walls and
// ground cells.
//
// Image pixels have their origin at the top-left corner, +x right, +y down.
// The camera frame is x right, y down, z forward; intrinsics are square
// pixels with the principal point at the image center and no skew or
// distortion.
#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <algorithm>
#include <limits>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sa/geo.hpp"

namespace sa {

class ProjectionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline double deg2rad(double d) { return d * std::numbers::pi / 180.0; }
inline double rad2deg(double r) { return r * 180.0 / std::numbers::pi; }

/// Angular magnification: fov = 2 atan(tan(base / 2) / zoom).
inline double zoom_to_fov(double zoom, double base_fov_deg) {
  if (!(zoom >= 1.0)) throw ProjectionError("zoom must be >= 1");
  if (!(base_fov_deg > 0.0 && base_fov_deg < 180.0)) {
    throw ProjectionError("field of view must be in (0, 180) degrees");
  }
  if (zoom == 1.0) return base_fov_deg;
  return rad2deg(2.0 * std::atan(std::tan(deg2rad(base_fov_deg) / 2.0) / zoom));
}

struct CameraPose {
  Point3 position;
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();  // world -> camera
  int image_width = 640;
  int image_height = 480;
  double base_fov_h = 60.0;  // degrees at zoom 1
  double zoom = 1.0;

  void validate() const {
    if (!is_finite(position)) throw ProjectionError("camera position not finite");
    const double err = (rotation.transpose() * rotation - Eigen::Matrix3d::Identity()).norm();
    if (!(err <= 1e-9) || rotation.determinant() < 0.0) {
      throw ProjectionError("camera rotation is not orthonormal");
    }
    if (image_width <= 0 || image_height <= 0) throw ProjectionError("image size must be positive");
    if (!(zoom >= 1.0)) throw ProjectionError("zoom must be >= 1");
    if (!(base_fov_h > 0.0 && base_fov_h < 180.0)) {
      throw ProjectionError("field of view must be in (0, 180) degrees");
    }
  }

  double fov_h() const { return zoom_to_fov(zoom, base_fov_h); }
  double focal_px() const { return 0.5 * image_width / std::tan(deg2rad(fov_h()) / 2.0); }
  Eigen::Vector2d principal_point() const { return {0.5 * image_width, 0.5 * image_height}; }

  Eigen::Matrix3d intrinsics() const {
    const double f = focal_px();
    Eigen::Matrix3d k;
    k << f, 0, 0.5 * image_width, 0, f, 0.5 * image_height, 0, 0, 1;
    return k;
  }

  Eigen::Vector3d to_camera(Point3 p) const {
    return rotation * Eigen::Vector3d(p.x - position.x, p.y - position.y, p.z - position.z);
  }
};

/// Rotation looking from `eye` toward `target`; `up` fixes the roll (image
/// up follows it). Falls back to north-up when looking along `up`.
inline Eigen::Matrix3d look_at(Point3 eye, Point3 target, Point3 up = {0, 0, 1}) {
  Eigen::Vector3d f(target.x - eye.x, target.y - eye.y, target.z - eye.z);
  if (f.norm() == 0.0) throw ProjectionError("look_at target equals eye");
  f.normalize();
  Eigen::Vector3d u(up.x, up.y, up.z);
  Eigen::Vector3d r = f.cross(u);
  if (r.norm() < 1e-12) r = f.cross(Eigen::Vector3d(0, 1, 0));
  r.normalize();
  const Eigen::Vector3d down = f.cross(r);
  Eigen::Matrix3d rot;
  rot.row(0) = r.transpose();
  rot.row(1) = down.transpose();
  rot.row(2) = f.transpose();
  return rot;
}

struct ProjectedPoint {
  PixelPoint pixel;
  bool in_front = false;
  double depth = 0.0;  // camera-frame z
};

inline ProjectedPoint project_point(const CameraPose& cam, Point3 p) {
  const Eigen::Vector3d c = cam.to_camera(p);
  ProjectedPoint out;
  out.depth = c.z();
  out.in_front = c.z() > 0.0;
  if (out.in_front) {
    const double f = cam.focal_px();
    out.pixel = {0.5 * cam.image_width + f * c.x() / c.z(),
                 0.5 * cam.image_height + f * c.y() / c.z()};
  }
  return out;
}

/// World point at camera-frame depth `depth` behind pixel `px`.
inline Point3 unproject(const CameraPose& cam, PixelPoint px, double depth) {
  const double f = cam.focal_px();
  const Eigen::Vector3d c((px.x - 0.5 * cam.image_width) * depth / f,
                          (px.y - 0.5 * cam.image_height) * depth / f, depth);
  const Eigen::Vector3d w = cam.rotation.transpose() * c;
  return {w.x() + cam.position.x, w.y() + cam.position.y, w.z() + cam.position.z};
}

/// Rectangle in 3D. Corners are ordered so that local (s, t) coordinates
/// are (0,0), (1,0), (1,1), (0,1); the outward normal is
/// (c1 - c0) x (c3 - c0).
struct WallRect {
  std::string id;
  std::array<Point3, 4> corners;

  static WallRect make(std::string id, std::array<Point3, 4> corners) {
    WallRect w{std::move(id), corners};
    w.validate();
    return w;
  }

  Point3 normal() const {
    const Point3 n = cross(corners[1] - corners[0], corners[3] - corners[0]);
    return (1.0 / norm(n)) * n;
  }

  Point3 at(double s, double t) const {
    return corners[0] + s * (corners[1] - corners[0]) + t * (corners[3] - corners[0]);
  }

  void validate() const {
    for (const auto& c : corners) {
      if (!is_finite(c)) throw ProjectionError("wall '" + id + "': corner not finite");
    }
    const Point3 e1 = corners[1] - corners[0];
    const Point3 e3 = corners[3] - corners[0];
    if (norm(e1) == 0.0 || norm(e3) == 0.0 || norm(cross(e1, e3)) == 0.0) {
      throw ProjectionError("wall '" + id + "': degenerate rectangle");
    }
    if (std::abs(dot(corners[2] - corners[0], normal())) > 1e-6) {
      throw ProjectionError("wall '" + id + "': corners are not coplanar");
    }
    for (int i = 0; i < 4; ++i) {
      const Point3 a = corners[(i + 1) % 4] - corners[i];
      const Point3 b = corners[(i + 3) % 4] - corners[i];
      const double angle = std::acos(std::clamp(dot(a, b) / (norm(a) * norm(b)), -1.0, 1.0));
      if (std::abs(angle - std::numbers::pi / 2.0) > 1e-6) {
        throw ProjectionError("wall '" + id + "': corners do not form a rectangle");
      }
    }
  }
};

struct TexturePlacement {
  std::string target;  // "wall:<id>" or "cell:<index>"
  std::array<Point3, 4> quad;
  Eigen::Matrix3d homography;  // (s, t, 1) -> pixel, up to scale
  std::string source_id;
  double timestamp = 0.0;
};

inline PixelPoint apply_homography(const Eigen::Matrix3d& h, double s, double t) {
  const Eigen::Vector3d v = h * Eigen::Vector3d(s, t, 1.0);
  return {v.x() / v.z(), v.y() / v.z()};
}

namespace detail {

// Similarity transform moving the points' centroid to the origin with mean
// distance sqrt(2).
inline Eigen::Matrix3d normalizing_transform(const std::array<Eigen::Vector2d, 4>& pts) {
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  for (const auto& p : pts) mean += p;
  mean /= 4.0;
  double spread = 0.0;
  for (const auto& p : pts) spread += (p - mean).norm();
  spread /= 4.0;
  const double s = spread > 0.0 ? std::sqrt(2.0) / spread : 1.0;
  Eigen::Matrix3d t;
  t << s, 0, -s * mean.x(), 0, s, -s * mean.y(), 0, 0, 1;
  return t;
}

}  // namespace detail

/// Homography through four point correspondences (normalized DLT).
///
/// Rejects configurations whose design matrix has condition number above
/// 1e12. The result is scaled to unit Frobenius norm with h22 >= 0.
inline Eigen::Matrix3d homography_from_correspondences(const std::array<Eigen::Vector2d, 4>& src,
                                                       const std::array<Eigen::Vector2d, 4>& dst) {
  const Eigen::Matrix3d ts = detail::normalizing_transform(src);
  const Eigen::Matrix3d td = detail::normalizing_transform(dst);
  Eigen::Matrix<double, 8, 9> a;
  for (int i = 0; i < 4; ++i) {
    const Eigen::Vector3d s = ts * src[i].homogeneous();
    const Eigen::Vector3d d = td * dst[i].homogeneous();
    const double x = s.x() / s.z(), y = s.y() / s.z();
    const double u = d.x() / d.z(), v = d.y() / d.z();
    a.row(2 * i) << -x, -y, -1, 0, 0, 0, u * x, u * y, u;
    a.row(2 * i + 1) << 0, 0, 0, -x, -y, -1, v * x, v * y, v;
  }
  Eigen::JacobiSVD<Eigen::Matrix<double, 8, 9>> svd(a, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  if (!(sv(7) > 0.0) || sv(0) / sv(7) > 1e12) {
    throw ProjectionError("near-singular homography correspondences");
  }
  const Eigen::Matrix<double, 9, 1> h = svd.matrixV().col(8);
  Eigen::Matrix3d hn;
  hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
  Eigen::Matrix3d out = td.inverse() * hn * ts;
  out /= out.norm();
  if (out(2, 2) < 0.0) out = -out;
  if (!(std::abs(out.determinant()) > 1e-12)) {
    throw ProjectionError("homography is singular");
  }
  return out;
}

/// Frustum with the camera at the apex and `wall` as its base, expressed as
/// the homography from wall-local (s, t) to image pixels.
inline TexturePlacement wall_frustum_homography(const CameraPose& cam, const WallRect& wall,
                                                std::string target = {},
                                                std::string source_id = {},
                                                double timestamp = 0.0) {
  if (!(dot(cam.position - wall.corners[0], wall.normal()) > 0.0)) {
    throw ProjectionError("camera is not in front of wall '" + wall.id + "'");
  }
  static constexpr std::array<std::array<double, 2>, 4> kLocal{{{0, 0}, {1, 0}, {1, 1}, {0, 1}}};
  std::array<Eigen::Vector2d, 4> src;
  std::array<Eigen::Vector2d, 4> dst;
  for (std::size_t i = 0; i < 4; ++i) {
    const auto p = project_point(cam, wall.corners[i]);
    if (!p.in_front) {
      throw ProjectionError("wall '" + wall.id + "' is not entirely in front of the camera");
    }
    src[i] = {kLocal[i][0], kLocal[i][1]};
    dst[i] = {p.pixel.x, p.pixel.y};
  }
  TexturePlacement out;
  out.target = target.empty() ? "wall:" + wall.id : std::move(target);
  out.quad = wall.corners;
  out.homography = homography_from_correspondences(src, dst);
  out.source_id = std::move(source_id);
  out.timestamp = timestamp;
  return out;
}

struct GroundCell {
  std::size_t index = 0;
  Point2 min;
  Point2 max;

  WallRect rect() const {
    return {"cell:" + std::to_string(index),
            {Point3{min.x, min.y, 0.0}, Point3{max.x, min.y, 0.0}, Point3{max.x, max.y, 0.0},
             Point3{min.x, max.y, 0.0}}};
  }
};

/// Row-major tiling of [lo, hi] by square cells; edge cells are clipped.
inline std::vector<GroundCell> grid_ground(Point2 lo, Point2 hi, double cell) {
  if (!(cell > 0.0)) throw ProjectionError("cell size must be > 0");
  if (!(lo.x < hi.x && lo.y < hi.y)) throw ProjectionError("area of interest is empty");
  const auto nx = static_cast<std::size_t>(std::ceil((hi.x - lo.x) / cell));
  const auto ny = static_cast<std::size_t>(std::ceil((hi.y - lo.y) / cell));
  std::vector<GroundCell> out;
  out.reserve(nx * ny);
  for (std::size_t iy = 0; iy < ny; ++iy) {
    for (std::size_t ix = 0; ix < nx; ++ix) {
      const Point2 a{lo.x + static_cast<double>(ix) * cell, lo.y + static_cast<double>(iy) * cell};
      const Point2 b{std::min(a.x + cell, hi.x), std::min(a.y + cell, hi.y)};
      out.push_back({out.size(), a, b});
    }
  }
  return out;
}

inline std::vector<GroundCell> grid_ground(const Polygon2& aoi, double cell) {
  Point2 lo = aoi.vertex(0), hi = aoi.vertex(0);
  for (const auto& v : aoi.vertices()) {
    lo = {std::min(lo.x, v.x), std::min(lo.y, v.y)};
    hi = {std::max(hi.x, v.x), std::max(hi.y, v.y)};
  }
  return grid_ground(lo, hi, cell);
}

namespace detail {

// Separating-axis test between a convex quad and the closed image rectangle.
inline bool quad_overlaps_image(const std::array<PixelPoint, 4>& q, double w, double h) {
  double min_x = q[0].x, max_x = q[0].x, min_y = q[0].y, max_y = q[0].y;
  for (const auto& p : q) {
    min_x = std::min(min_x, p.x);
    max_x = std::max(max_x, p.x);
    min_y = std::min(min_y, p.y);
    max_y = std::max(max_y, p.y);
  }
  if (max_x < 0.0 || min_x > w || max_y < 0.0 || min_y > h) return false;
  const std::array<PixelPoint, 4> rect{{{0, 0}, {w, 0}, {w, h}, {0, h}}};
  for (std::size_t i = 0; i < 4; ++i) {
    const PixelPoint a = q[i], b = q[(i + 1) % 4];
    const double nx = -(b.y - a.y), ny = b.x - a.x;
    double qmin = std::numeric_limits<double>::infinity(), qmax = -qmin;
    double rmin = qmin, rmax = -qmin;
    for (const auto& p : q) {
      const double d = nx * p.x + ny * p.y;
      qmin = std::min(qmin, d);
      qmax = std::max(qmax, d);
    }
    for (const auto& p : rect) {
      const double d = nx * p.x + ny * p.y;
      rmin = std::min(rmin, d);
      rmax = std::max(rmax, d);
    }
    if (qmax < rmin || rmax < qmin) return false;
  }
  return true;
}

}  // namespace detail

/// Placements for every ground cell whose corners are all in front of the
/// camera and whose projection overlaps the image. Output is ascending by
/// cell index.
inline std::vector<TexturePlacement> place_on_ground(const CameraPose& cam,
                                                     std::span<const GroundCell> cells,
                                                     const std::string& source_id = {},
                                                     double timestamp = 0.0) {
  std::vector<TexturePlacement> out;
  if (!(cam.position.z > 0.0)) return out;
  for (const auto& cell : cells) {
    const WallRect rect = cell.rect();
    std::array<PixelPoint, 4> quad;
    bool in_front = true;
    for (std::size_t i = 0; i < 4 && in_front; ++i) {
      const auto p = project_point(cam, rect.corners[i]);
      in_front = p.in_front;
      quad[i] = p.pixel;
    }
    if (!in_front) continue;
    if (!detail::quad_overlaps_image(quad, cam.image_width, cam.image_height)) continue;
    out.push_back(wall_frustum_homography(cam, rect, rect.id, source_id, timestamp));
  }
  return out;
}

/// The image rectangle unprojected at `range` meters along the optical axis.
inline std::array<Point3, 4> image_plane_quad(const CameraPose& cam, double range = 10.0) {
  if (!(range > 0.0)) throw ProjectionError("image plane range must be > 0");
  const double w = cam.image_width, h = cam.image_height;
  return {unproject(cam, {0, 0}, range), unproject(cam, {w, 0}, range),
          unproject(cam, {w, h}, range), unproject(cam, {0, h}, range)};
}

}  // namespace sa
