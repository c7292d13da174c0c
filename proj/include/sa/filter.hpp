// Operation-zone / focus / nimbus information filter.
//
// A filter manager starts every entity as ToBeDetermined, the rule filter
// promotes vital classes to Show, and the zone filter decides the rest.
#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "sa/entity.hpp"
#include "sa/geo.hpp"

namespace sa {

struct Corridor {
  Polyline2 route;
  double half_width = 50.0;

  Corridor(Polyline2 r, double hw) : route(std::move(r)), half_width(hw) {
    if (!(half_width > 0.0) || !std::isfinite(half_width)) {
      throw GeometryError("corridor half width must be > 0");
    }
  }

  bool contains(Point2 p) const { return distance_point_polyline(p, route) <= half_width; }

  friend bool operator==(const Corridor&, const Corridor&) = default;
};

/// Mission-relevant region on the ground plane.
using OperationZone = std::variant<Polygon2, Corridor>;

struct FocusSet {
  Point3 user_position;
  double weapon_range = 0.0;
  double awareness_range = 0.0;
  std::optional<double> time_window;

  void validate() const {
    if (!is_finite(user_position)) throw std::invalid_argument("focus: user position not finite");
    if (!(weapon_range >= 0.0)) throw std::invalid_argument("focus: weapon_range must be >= 0");
    if (!(awareness_range >= 0.0)) {
      throw std::invalid_argument("focus: awareness_range must be >= 0");
    }
    if (time_window && !(*time_window > 0.0)) {
      throw std::invalid_argument("focus: time_window must be > 0");
    }
  }

  friend bool operator==(const FocusSet&, const FocusSet&) = default;
};

struct AmplificationConfig {
  double factor = 2.0;
  double distance = 50.0;  // meters, ground-plane, inclusive
};

struct ImpactZone {
  EntityId entity_id;
  Point3 sphere_center;
  double radius = 0.0;
  Disc2 ground_disc;
};

enum class Visibility { to_be_determined, show, hide };
enum class Reason { none, vital_rule, zone_pass, zone_fail, temporal_fail, default_hide };

inline const char* to_string(Visibility v) {
  switch (v) {
    case Visibility::to_be_determined: return "tbd";
    case Visibility::show: return "show";
    case Visibility::hide: return "hide";
  }
  return "?";
}

inline const char* to_string(Reason r) {
  switch (r) {
    case Reason::none: return "none";
    case Reason::vital_rule: return "vital-rule";
    case Reason::zone_pass: return "zone-pass";
    case Reason::zone_fail: return "zone-fail";
    case Reason::temporal_fail: return "temporal-fail";
    case Reason::default_hide: return "default-hide";
  }
  return "?";
}

struct VisibilityState {
  Visibility state = Visibility::to_be_determined;
  Reason reason = Reason::none;

  friend bool operator==(const VisibilityState&, const VisibilityState&) = default;
};

struct FilterDecisionSet {
  std::map<EntityId, VisibilityState> decisions;
  std::uint64_t input_revision = 0;
  FocusSet focus_snapshot;
  std::optional<OperationZone> zone_snapshot;
  double time = 0.0;
  bool preview = false;

  std::vector<EntityId> shown() const {
    std::vector<EntityId> out;
    for (const auto& [id, v] : decisions) {
      if (v.state == Visibility::show) out.push_back(id);
    }
    return out;
  }
};

inline ImpactZone compute_impact_zone(const Entity& e, const EntityDatabase& table,
                                      std::span<const Entity> neighbors,
                                      const AmplificationConfig& amp = {}) {
  double radius = table.class_of(e).base_impact_radius;
  for (const auto& other : neighbors) {
    if (other.id == e.id) continue;
    const auto* cls = table.find_class(other.class_name);
    if (cls && cls->amplifier &&
        distance(other.position.ground(), e.position.ground()) <= amp.distance) {
      radius *= amp.factor;
      break;
    }
  }
  return {e.id, e.position, radius, Disc2{e.position.ground(), radius}};
}

inline bool nimbus_meets_zone(const Disc2& nimbus, const OperationZone& zone) {
  if (const auto* poly = std::get_if<Polygon2>(&zone)) {
    return disc_intersects_polygon(nimbus, *poly);
  }
  const auto& corridor = std::get<Corridor>(zone);
  return distance_point_polyline(nimbus.center, corridor.route) <=
         corridor.half_width + nimbus.radius;
}

/// nimbus meets zone AND (entity inside a focus OR nimbus meets awareness focus).
inline bool zone_pass(const ImpactZone& iz, const Entity& e, const OperationZone& zone,
                      const FocusSet& foci) {
  if (!nimbus_meets_zone(iz.ground_disc, zone)) return false;
  const Point2 user = foci.user_position.ground();
  const double to_user = distance(e.position.ground(), user);
  if (to_user <= foci.weapon_range || to_user <= foci.awareness_range) return true;
  return discs_intersect(iz.ground_disc, Disc2{user, foci.awareness_range});
}

inline FilterDecisionSet run_filter(const EntityDatabase& db, const OperationZone& zone,
                                    const FocusSet& foci, double now,
                                    const AmplificationConfig& amp = {}) {
  FilterDecisionSet out;
  out.input_revision = db.revision();
  out.focus_snapshot = foci;
  out.zone_snapshot = zone;
  out.time = now;

  const std::vector<Entity> entities = db.snapshot();
  for (const auto& e : entities) out.decisions[e.id] = {};

  for (const auto& e : entities) {
    if (db.class_of(e).vital) out.decisions[e.id] = {Visibility::show, Reason::vital_rule};
  }

  for (const auto& e : entities) {
    auto& d = out.decisions[e.id];
    if (d.state != Visibility::to_be_determined) continue;
    if (foci.time_window && now - e.last_update > *foci.time_window) {
      d = {Visibility::hide, Reason::temporal_fail};
      continue;
    }
    const ImpactZone iz = compute_impact_zone(e, db, entities, amp);
    d = zone_pass(iz, e, zone, foci) ? VisibilityState{Visibility::show, Reason::zone_pass}
                                     : VisibilityState{Visibility::hide, Reason::zone_fail};
  }

  for (auto& [_, d] : out.decisions) {
    if (d.state == Visibility::to_be_determined) d = {Visibility::hide, Reason::default_hide};
  }
  return out;
}

/// Coalesces pose/focus/zone/db events into pending recomputations.
///
/// Producers may post from any thread; `take` is called from the engine
/// context and yields at most one request per call, always carrying the
/// latest posted values.
class RecomputeTrigger {
 public:
  struct Request {
    Point3 pose;
    FocusSet focus;
    std::optional<OperationZone> zone;
    std::uint64_t events = 0;  // number of events folded into this request
  };

  RecomputeTrigger(FocusSet focus, std::optional<OperationZone> zone)
      : focus_(std::move(focus)), zone_(std::move(zone)) {
    pose_ = focus_.user_position;
  }

  void pose_changed(Point3 p) {
    std::lock_guard lock(mu_);
    pose_ = p;
    focus_.user_position = p;
    mark();
  }

  void focus_changed(FocusSet f) {
    std::lock_guard lock(mu_);
    f.user_position = pose_;
    focus_ = std::move(f);
    mark();
  }

  void zone_changed(OperationZone z) {
    std::lock_guard lock(mu_);
    zone_ = std::move(z);
    mark();
  }

  void db_mutated() {
    std::lock_guard lock(mu_);
    mark();
  }

  bool pending() const {
    std::lock_guard lock(mu_);
    return pending_events_ > 0;
  }

  std::optional<Request> take() {
    std::lock_guard lock(mu_);
    if (pending_events_ == 0) return std::nullopt;
    Request r{pose_, focus_, zone_, pending_events_};
    pending_events_ = 0;
    return r;
  }

 private:
  void mark() { ++pending_events_; }

  mutable std::mutex mu_;
  Point3 pose_;
  FocusSet focus_;
  std::optional<OperationZone> zone_;
  std::uint64_t pending_events_ = 0;
};

/// Runs the filter for a trigger request. Without a zone nothing passes the
/// zone stage, so only vital entities are shown.
inline FilterDecisionSet run_request(const EntityDatabase& db,
                                     const RecomputeTrigger::Request& req, double now,
                                     const AmplificationConfig& amp = {}) {
  if (req.zone) return run_filter(db, *req.zone, req.focus, now, amp);
  FilterDecisionSet out;
  out.input_revision = db.revision();
  out.focus_snapshot = req.focus;
  out.time = now;
  for (const auto& e : db.snapshot()) {
    out.decisions[e.id] = db.class_of(e).vital
                              ? VisibilityState{Visibility::show, Reason::vital_rule}
                              : VisibilityState{Visibility::hide, Reason::default_hide};
  }
  return out;
}

}  // namespace sa
