// Occlusion classification against a sparse occluder model and the
// renderer-agnostic directives for each x-ray occlusion metaphor.
//
// Directives only ever describe line drawings; nothing here asks a
// renderer to fill a region.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <tuple>
#include <variant>
#include <vector>

#include "sa/entity.hpp"
#include "sa/geo.hpp"

namespace sa {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Vertical wall standing on the ground between two ground points.
struct VerticalWall {
  Point2 from;
  Point2 to;
  double height = 0.0;

  friend bool operator==(const VerticalWall&, const VerticalWall&) = default;
};

struct Occluder {
  std::string id;
  std::variant<Aabb3, VerticalWall> shape;

  void validate() const {
    if (id.empty()) throw GeometryError("occluder id is empty");
    if (const auto* box = std::get_if<Aabb3>(&shape)) {
      if (!(box->min.x < box->max.x && box->min.y < box->max.y && box->min.z < box->max.z)) {
        throw GeometryError("occluder '" + id + "': box needs positive extent on every axis");
      }
    } else {
      const auto& wall = std::get<VerticalWall>(shape);
      if (wall.from == wall.to || !(wall.height > 0.0)) {
        throw GeometryError("occluder '" + id + "': wall needs positive length and height");
      }
    }
  }
};

using Polyline3 = std::vector<Point3>;

struct LayerCrossing {
  std::string occluder_id;
  double t = 0.0;  // parameter along eye->target where the ray meets the occluder
  Point3 point;
  Point3 face_normal;  // unit, pointing back toward the eye side
  double distance = 0.0;
  std::vector<Polyline3> outline;
};

struct OcclusionInfo {
  EntityId entity_id;
  Point3 eye;
  Point3 target;
  double distance = 0.0;
  int layers = 0;
  int zone = 1;
  std::vector<LayerCrossing> crossings;  // ascending by t
};

namespace detail {

inline std::vector<Polyline3> box_outline(const Aabb3& b) {
  auto ring = [&](double z) {
    return Polyline3{{b.min.x, b.min.y, z}, {b.max.x, b.min.y, z}, {b.max.x, b.max.y, z},
                     {b.min.x, b.max.y, z}, {b.min.x, b.min.y, z}};
  };
  std::vector<Polyline3> out{ring(b.min.z), ring(b.max.z)};
  for (const auto& [x, y] : {std::pair{b.min.x, b.min.y}, std::pair{b.max.x, b.min.y},
                             std::pair{b.max.x, b.max.y}, std::pair{b.min.x, b.max.y}}) {
    out.push_back({{x, y, b.min.z}, {x, y, b.max.z}});
  }
  return out;
}

inline std::vector<Polyline3> wall_outline(const VerticalWall& w) {
  return {{{w.from.x, w.from.y, 0.0},
           {w.to.x, w.to.y, 0.0},
           {w.to.x, w.to.y, w.height},
           {w.from.x, w.from.y, w.height},
           {w.from.x, w.from.y, 0.0}}};
}

// Entry parameter of the open segment (0,1) into a box, if it meets it.
inline std::optional<std::pair<double, Point3>> cross_box(Point3 eye, Point3 target,
                                                         const Aabb3& box) {
  const auto [enter, exit] = clip_line_aabb(eye, target, box);
  if (!(enter <= exit && exit > 0.0 && enter < 1.0)) return std::nullopt;
  double t = enter > 0.0 ? enter : std::min(exit, 1.0);
  const Point3 p = eye + t * (target - eye);
  // Face normal of the entry face: the face the entry point lies on, facing the eye.
  Point3 n{0, 0, 0};
  const double d[3] = {std::min(std::abs(p.x - box.min.x), std::abs(p.x - box.max.x)),
                       std::min(std::abs(p.y - box.min.y), std::abs(p.y - box.max.y)),
                       std::min(std::abs(p.z - box.min.z), std::abs(p.z - box.max.z))};
  const int axis = static_cast<int>(std::min_element(d, d + 3) - d);
  const Point3 dir = target - eye;
  const double comp[3] = {dir.x, dir.y, dir.z};
  const double sign = comp[axis] > 0.0 ? -1.0 : 1.0;
  (axis == 0 ? n.x : axis == 1 ? n.y : n.z) = sign;
  return std::pair{t, n};
}

inline std::optional<std::pair<double, Point3>> cross_wall(Point3 eye, Point3 target,
                                                          const VerticalWall& w) {
  const Point2 along = w.to - w.from;
  const Point2 normal2{-along.y, along.x};
  const double se = dot(normal2, eye.ground() - w.from);
  const double st = dot(normal2, target.ground() - w.from);
  const double len2 = dot(along, along);
  const Point3 dir = target - eye;

  if (se == 0.0 && st == 0.0) {
    // Segment lies in the wall plane: clip in (u, z) wall coordinates.
    const double u0 = dot(eye.ground() - w.from, along) / len2;
    const double du = dot(dir.ground(), along) / len2;
    double t0 = -std::numeric_limits<double>::infinity();
    double t1 = std::numeric_limits<double>::infinity();
    for (const auto& [o, d, lo, hi] :
         {std::tuple{u0, du, 0.0, 1.0}, std::tuple{eye.z, dir.z, 0.0, w.height}}) {
      if (d == 0.0) {
        if (o < lo || o > hi) return std::nullopt;
        continue;
      }
      double ta = (lo - o) / d, tb = (hi - o) / d;
      if (ta > tb) std::swap(ta, tb);
      t0 = std::max(t0, ta);
      t1 = std::min(t1, tb);
    }
    if (!(t0 <= t1 && t1 > 0.0 && t0 < 1.0)) return std::nullopt;
    const double t = std::max(t0, 0.0);
    const double nl = std::sqrt(len2);
    return std::pair{t, Point3{normal2.x / nl, normal2.y / nl, 0.0}};
  }
  if (se == st) return std::nullopt;
  const double t = se / (se - st);
  if (!(t > 0.0 && t < 1.0)) return std::nullopt;
  const Point3 p = eye + t * dir;
  const double u = dot(p.ground() - w.from, along) / len2;
  if (u < 0.0 || u > 1.0 || p.z < 0.0 || p.z > w.height) return std::nullopt;
  const double nl = std::sqrt(len2);
  const double sign = se > 0.0 ? 1.0 : -1.0;
  return std::pair{t, Point3{sign * normal2.x / nl, sign * normal2.y / nl, 0.0}};
}

}  // namespace detail

/// Occluders met by the open segment (eye, target), ordered along the ray.
inline std::vector<LayerCrossing> find_crossings(Point3 eye, Point3 target,
                                                 std::span<const Occluder> occluders) {
  if (eye == target) throw GeometryError("eye and target coincide");
  std::vector<LayerCrossing> out;
  for (const auto& occ : occluders) {
    std::optional<std::pair<double, Point3>> hit;
    std::vector<Polyline3> outline;
    if (const auto* box = std::get_if<Aabb3>(&occ.shape)) {
      hit = detail::cross_box(eye, target, *box);
      if (hit) outline = detail::box_outline(*box);
    } else {
      const auto& wall = std::get<VerticalWall>(occ.shape);
      hit = detail::cross_wall(eye, target, wall);
      if (hit) outline = detail::wall_outline(wall);
    }
    if (!hit) continue;
    const Point3 p = eye + hit->first * (target - eye);
    out.push_back({occ.id, hit->first, p, hit->second, distance(eye, p), std::move(outline)});
  }
  std::sort(out.begin(), out.end(), [](const LayerCrossing& a, const LayerCrossing& b) {
    return a.t != b.t ? a.t < b.t : a.occluder_id < b.occluder_id;
  });
  return out;
}

inline int count_layers(Point3 eye, Point3 target, std::span<const Occluder> occluders) {
  return static_cast<int>(find_crossings(eye, target, occluders).size());
}

/// 1-based depth zone; a distance equal to a boundary falls in the farther zone.
inline int classify_zone(double distance, std::span<const double> boundaries) {
  return static_cast<int>(std::upper_bound(boundaries.begin(), boundaries.end(), distance) -
                          boundaries.begin()) +
         1;
}

inline std::vector<double> ground_grid_rings(double max_distance, double first_ring,
                                             double spacing) {
  if (!(first_ring > 0.0) || !(spacing > 0.0)) {
    throw ConfigError("ground grid needs first_ring > 0 and spacing > 0");
  }
  std::vector<double> rings;
  for (int i = 0;; ++i) {
    const double r = first_ring + i * spacing;
    if (r > max_distance) break;
    rings.push_back(r);
  }
  return rings;
}

enum class Metaphor { empty, opacity, stipple, ground_grid, edge_map, virtual_wall, tunnel };

inline constexpr std::array<std::pair<Metaphor, std::string_view>, 7> kMetaphorNames{{
    {Metaphor::empty, "empty"},
    {Metaphor::opacity, "opacity"},
    {Metaphor::stipple, "stipple"},
    {Metaphor::ground_grid, "ground-grid"},
    {Metaphor::edge_map, "edge-map"},
    {Metaphor::virtual_wall, "virtual-wall"},
    {Metaphor::tunnel, "tunnel"},
}};

inline std::string_view to_string(Metaphor m) {
  for (const auto& [k, name] : kMetaphorNames) {
    if (k == m) return name;
  }
  return "?";
}

inline Metaphor parse_metaphor(std::string_view name) {
  for (const auto& [k, n] : kMetaphorNames) {
    if (n == name) return k;
  }
  throw ConfigError("unknown occlusion metaphor '" + std::string(name) + "'");
}

enum class StipplePattern { solid, dashed, dotted };

inline const char* to_string(StipplePattern p) {
  switch (p) {
    case StipplePattern::solid: return "solid";
    case StipplePattern::dashed: return "dashed";
    case StipplePattern::dotted: return "dotted";
  }
  return "?";
}

struct DirectiveConfig {
  Metaphor metaphor = Metaphor::empty;
  std::vector<double> zone_boundaries{20.0, 40.0, 60.0, 80.0};
  std::vector<double> opacity_table{1.0, 0.8, 0.6, 0.4, 0.2};
  double stipple_period = 1.0;  // meters, object space
  double grid_first_ring = 20.0;
  double grid_spacing = 20.0;
  double grid_max_distance = 100.0;
  int wall_base_lines = 2;
  int wall_line_increment = 2;
  double tunnel_side = 2.0;  // square side at the reference distance
  double tunnel_reference_distance = 20.0;

  int zone_count() const { return static_cast<int>(zone_boundaries.size()) + 1; }

  void validate() const {
    for (std::size_t i = 0; i < zone_boundaries.size(); ++i) {
      if (!(zone_boundaries[i] > 0.0) || (i > 0 && !(zone_boundaries[i] > zone_boundaries[i - 1]))) {
        throw ConfigError("zone boundaries must be positive and strictly ascending");
      }
    }
    if (opacity_table.size() != static_cast<std::size_t>(zone_count())) {
      throw ConfigError("opacity table needs one entry per zone");
    }
    for (std::size_t i = 0; i < opacity_table.size(); ++i) {
      if (!(opacity_table[i] >= 0.0 && opacity_table[i] <= 1.0)) {
        throw ConfigError("opacity values must lie in [0, 1]");
      }
      if (i > 0 && opacity_table[i] > opacity_table[i - 1]) {
        throw ConfigError("opacity table must not increase with zone");
      }
    }
    if (!(stipple_period > 0.0)) throw ConfigError("stipple period must be > 0");
    if (!(grid_first_ring > 0.0) || !(grid_spacing > 0.0)) {
      throw ConfigError("ground grid needs first_ring > 0 and spacing > 0");
    }
    if (wall_base_lines < 1 || wall_line_increment < 1) {
      throw ConfigError("virtual wall line counts must be >= 1");
    }
    if (!(tunnel_side > 0.0) || !(tunnel_reference_distance > 0.0)) {
      throw ConfigError("tunnel sizing must be positive");
    }
  }
};

struct OpacityParams {
  int zone = 1;
  double alpha = 1.0;
};

struct StippleParams {
  StipplePattern pattern = StipplePattern::solid;
  double period = 1.0;
};

struct DropLine {
  Point3 top;
  Point3 foot;
};

struct GroundGridParams {
  Point3 center;
  std::vector<double> rings;
  DropLine drop_line;
};

struct EdgeMapParams {
  std::vector<Polyline3> outlines;
};

struct WallLayer {
  int layer = 1;
  std::string occluder_id;
  Point3 anchor;
  Point3 normal;
  int line_count = 0;
};

struct VirtualWallParams {
  std::vector<WallLayer> layers;
};

struct TunnelSquare {
  std::string occluder_id;
  Point3 center;
  double side = 0.0;
  Polyline3 outline;  // closed: 5 points
};

struct TunnelParams {
  std::vector<TunnelSquare> squares;
};

using DirectiveParams = std::variant<std::monostate, OpacityParams, StippleParams,
                                     GroundGridParams, EdgeMapParams, VirtualWallParams,
                                     TunnelParams>;

struct RenderDirective {
  EntityId entity_id;
  Metaphor metaphor = Metaphor::empty;
  DirectiveParams params;
  bool line_drawing_only = true;
};

inline OcclusionInfo analyze_occlusion(const EntityId& id, Point3 eye, Point3 target,
                                       std::span<const Occluder> occluders,
                                       std::span<const double> boundaries) {
  OcclusionInfo info;
  info.entity_id = id;
  info.eye = eye;
  info.target = target;
  info.distance = distance(eye, target);
  info.crossings = find_crossings(eye, target, occluders);
  info.layers = static_cast<int>(info.crossings.size());
  info.zone = classify_zone(info.distance, boundaries);
  return info;
}

namespace detail {

inline Point3 unit(Point3 v) { return (1.0 / norm(v)) * v; }

inline Polyline3 square_facing(Point3 center, Point3 view, double side) {
  const Point3 v = unit(view);
  Point3 right = cross(v, Point3{0, 0, 1});
  if (norm(right) == 0.0) right = cross(v, Point3{0, 1, 0});
  right = unit(right);
  const Point3 up = unit(cross(right, v));
  const double h = 0.5 * side;
  const Point3 a = center + (-h) * right + (-h) * up;
  const Point3 b = center + h * right + (-h) * up;
  const Point3 c = center + h * right + h * up;
  const Point3 d = center + (-h) * right + h * up;
  return {a, b, c, d, a};
}

}  // namespace detail

inline RenderDirective make_directive(Metaphor metaphor, const OcclusionInfo& info,
                                      const DirectiveConfig& cfg) {
  RenderDirective out{info.entity_id, metaphor, std::monostate{}, true};
  switch (metaphor) {
    case Metaphor::empty:
      break;
    case Metaphor::opacity: {
      const auto idx = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(info.zone, 1) - 1),
                                               0, cfg.opacity_table.size() - 1);
      out.params = OpacityParams{info.zone, cfg.opacity_table[idx]};
      break;
    }
    case Metaphor::stipple: {
      constexpr int kPatternCount = 3;
      const int idx = std::min(info.layers, kPatternCount - 1);
      out.params = StippleParams{static_cast<StipplePattern>(idx), cfg.stipple_period};
      break;
    }
    case Metaphor::ground_grid: {
      GroundGridParams p;
      p.center = {info.eye.x, info.eye.y, 0.0};
      p.rings = ground_grid_rings(cfg.grid_max_distance, cfg.grid_first_ring, cfg.grid_spacing);
      p.drop_line = {info.target, {info.target.x, info.target.y, 0.0}};
      out.params = std::move(p);
      break;
    }
    case Metaphor::edge_map: {
      EdgeMapParams p;
      for (const auto& c : info.crossings) {
        p.outlines.insert(p.outlines.end(), c.outline.begin(), c.outline.end());
      }
      out.params = std::move(p);
      break;
    }
    case Metaphor::virtual_wall: {
      VirtualWallParams p;
      for (int j = 1; j <= info.layers; ++j) {
        const auto& c = info.crossings[static_cast<std::size_t>(j - 1)];
        p.layers.push_back(
            {j, c.occluder_id, c.point, c.face_normal, cfg.wall_base_lines + j * cfg.wall_line_increment});
      }
      out.params = std::move(p);
      break;
    }
    case Metaphor::tunnel: {
      TunnelParams p;
      const Point3 view = info.target - info.eye;
      for (const auto& c : info.crossings) {
        const double side =
            cfg.tunnel_side * cfg.tunnel_reference_distance / std::max(c.distance, 1e-3);
        p.squares.push_back(
            {c.occluder_id, c.point, side, detail::square_facing(c.point, view, side)});
      }
      out.params = std::move(p);
      break;
    }
  }
  return out;
}

}  // namespace sa
