// Top-down map mode: view transform, ground picking, and route editing.
#pragma once

#include <cmath>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "sa/filter.hpp"
#include "sa/geo.hpp"

namespace sa {

class MapError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Heading-up map centered on the user. Heading is in degrees clockwise from
/// north (+y) so that the user's facing direction points to the top of the
/// screen.
struct MapViewState {
  Point2 center;
  double heading = 0.0;
  double scale = 1.0;  // pixels per meter
  int width = 800;
  int height = 600;
  bool active = true;

  void validate() const {
    if (!(scale > 0.0) || !std::isfinite(scale)) throw MapError("map scale must be > 0");
    if (width <= 0 || height <= 0) throw MapError("map viewport must be positive");
  }
};

namespace detail {

struct ScreenAxes {
  Point2 right;  // world direction of screen +x
  Point2 up;     // world direction of screen -y
};

inline ScreenAxes screen_axes(double heading_deg) {
  const double h = heading_deg * std::numbers::pi / 180.0;
  return {{std::cos(h), -std::sin(h)}, {std::sin(h), std::cos(h)}};
}

}  // namespace detail

inline PixelPoint world_to_screen(Point2 p, const MapViewState& view) {
  const auto axes = detail::screen_axes(view.heading);
  const Point2 d = p - view.center;
  return {0.5 * view.width + view.scale * dot(d, axes.right),
          0.5 * view.height - view.scale * dot(d, axes.up)};
}

/// Ground point (z = 0) under a pixel of the active map.
inline Point3 screen_to_world(PixelPoint px, const MapViewState& view) {
  view.validate();
  if (!view.active) throw MapError("map view is not active");
  if (!(px.x >= 0.0 && px.x <= view.width && px.y >= 0.0 && px.y <= view.height)) {
    throw MapError("pixel outside viewport");
  }
  const auto axes = detail::screen_axes(view.heading);
  const double r = (px.x - 0.5 * view.width) / view.scale;
  const double u = (0.5 * view.height - px.y) / view.scale;
  const Point2 w = view.center + r * axes.right + u * axes.up;
  return {w.x, w.y, 0.0};
}

/// Look-down activation with hysteresis: activates at or below
/// `threshold`, deactivates only once pitch rises to `threshold + band`.
class MapActivation {
 public:
  explicit MapActivation(double threshold = -60.0, double band = 5.0)
      : threshold_(threshold), band_(band) {}

  bool set_pitch(double pitch) {
    if (!(pitch >= -90.0 && pitch <= 90.0)) throw MapError("pitch must be in [-90, 90]");
    if (!active_ && pitch <= threshold_) {
      active_ = true;
    } else if (active_ && pitch >= threshold_ + band_) {
      active_ = false;
    }
    return active_;
  }

  bool active() const { return active_; }

 private:
  double threshold_;
  double band_;
  bool active_ = false;
};

struct Route {
  std::string id;
  std::vector<Point3> waypoints;
  double half_width = 50.0;

  void validate() const {
    if (!(half_width > 0.0)) throw MapError("route '" + id + "': half width must be > 0");
    for (const auto& w : waypoints) {
      if (w.z != 0.0) throw MapError("route '" + id + "': waypoints must lie on the ground");
    }
  }

  friend bool operator==(const Route&, const Route&) = default;
};

inline Route add_waypoint(const Route& route, PixelPoint px, const MapViewState& view) {
  Route out = route;
  out.waypoints.push_back(screen_to_world(px, view));
  return out;
}

inline Route move_waypoint(const Route& route, std::size_t index, PixelPoint px,
                           const MapViewState& view) {
  if (index >= route.waypoints.size()) throw MapError("waypoint index out of range");
  Route out = route;
  out.waypoints[index] = screen_to_world(px, view);
  return out;
}

inline Route delete_waypoint(const Route& route, std::size_t index) {
  if (index >= route.waypoints.size()) throw MapError("waypoint index out of range");
  Route out = route;
  out.waypoints.erase(out.waypoints.begin() + static_cast<std::ptrdiff_t>(index));
  return out;
}

/// Nearest waypoint within `radius_px` of the click, if any.
inline std::optional<std::size_t> pick_waypoint(const Route& route, PixelPoint px,
                                                const MapViewState& view,
                                                double radius_px = 10.0) {
  std::optional<std::size_t> best;
  double best_d = radius_px;
  for (std::size_t i = 0; i < route.waypoints.size(); ++i) {
    const PixelPoint s = world_to_screen(route.waypoints[i].ground(), view);
    const double d = std::hypot(s.x - px.x, s.y - px.y);
    if (d <= best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

inline OperationZone route_to_zone(const Route& route) {
  if (route.waypoints.size() < 2) {
    throw MapError("route '" + route.id + "' needs at least 2 waypoints to form a corridor");
  }
  std::vector<Point2> pts;
  pts.reserve(route.waypoints.size());
  for (const auto& w : route.waypoints) pts.push_back(w.ground());
  try {
    return Corridor{Polyline2{std::move(pts)}, route.half_width};
  } catch (const GeometryError& e) {
    throw MapError("route '" + route.id + "': " + e.what());
  }
}

/// Runs the full pipeline without touching session state; the result is
/// tagged so it is never published to other federates.
inline FilterDecisionSet preview_filter(const OperationZone& zone, const FocusSet& foci,
                                        const EntityDatabase& db, double now,
                                        const AmplificationConfig& amp = {}) {
  FilterDecisionSet out = run_filter(db, zone, foci, now, amp);
  out.preview = true;
  return out;
}

/// Value-based undo/redo over route edits.
class RouteEditor {
 public:
  explicit RouteEditor(Route initial) : current_(std::move(initial)) {}

  const Route& current() const { return current_; }

  void apply(Route next) {
    undo_.push_back(std::move(current_));
    current_ = std::move(next);
    redo_.clear();
  }

  bool undo() {
    if (undo_.empty()) return false;
    redo_.push_back(std::move(current_));
    current_ = std::move(undo_.back());
    undo_.pop_back();
    return true;
  }

  bool redo() {
    if (redo_.empty()) return false;
    undo_.push_back(std::move(current_));
    current_ = std::move(redo_.back());
    redo_.pop_back();
    return true;
  }

 private:
  Route current_;
  std::vector<Route> undo_;
  std::vector<Route> redo_;
};

}  // namespace sa
