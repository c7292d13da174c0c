// Canonical JSON encoding of the domain types.
//
// nlohmann::json keeps object keys in a std::map, so dump() already emits
// keys in lexicographic order; doubles are printed in shortest round-trip
// form. Together that makes dump() the canonical byte form used for wire
// frames, record files and golden tests.
#pragma once

#include <json.hpp>

#include <cstdint>
#include <stdexcept>
#include <string>

#include "sa/entity.hpp"
#include "sa/filter.hpp"
#include "sa/geo.hpp"
#include "sa/map_view.hpp"
#include "sa/occlusion.hpp"
#include "sa/projection.hpp"

namespace sa {

using json = nlohmann::json;

class MalformedPayload : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline std::string canonical(const json& j) { return j.dump(); }

// ---------------------------------------------------------------------------
// Field access with readable errors

namespace io {

inline const json& field(const json& j, const char* key) {
  if (!j.is_object()) throw MalformedPayload("expected object");
  auto it = j.find(key);
  if (it == j.end()) throw MalformedPayload(std::string("missing field '") + key + "'");
  return *it;
}

inline double number(const json& j, const char* what) {
  if (!j.is_number()) throw MalformedPayload(std::string(what) + ": expected number");
  return j.get<double>();
}

inline double number(const json& j, const char* key, double fallback) {
  auto it = j.find(key);
  return it == j.end() ? fallback : number(*it, key);
}

inline std::string string(const json& j, const char* key) {
  const auto& v = field(j, key);
  if (!v.is_string()) throw MalformedPayload(std::string(key) + ": expected string");
  return v.get<std::string>();
}

inline bool boolean(const json& j, const char* key, bool fallback) {
  auto it = j.find(key);
  if (it == j.end()) return fallback;
  if (!it->is_boolean()) throw MalformedPayload(std::string(key) + ": expected boolean");
  return it->get<bool>();
}

inline std::uint64_t uint(const json& j, const char* key) {
  const auto& v = field(j, key);
  if (!v.is_number_unsigned()) {
    throw MalformedPayload(std::string(key) + ": expected non-negative integer");
  }
  return v.get<std::uint64_t>();
}

}  // namespace io

inline json to_json(Point2 p) { return json::array({p.x, p.y}); }
inline json to_json(Point3 p) { return json::array({p.x, p.y, p.z}); }

inline Point2 parse_point2(const json& j) {
  if (!j.is_array() || j.size() != 2) throw MalformedPayload("expected [x, y]");
  return {io::number(j[0], "x"), io::number(j[1], "y")};
}

inline Point3 parse_point3(const json& j) {
  if (!j.is_array() || (j.size() != 3 && j.size() != 2)) {
    throw MalformedPayload("expected [x, y, z]");
  }
  return {io::number(j[0], "x"), io::number(j[1], "y"), j.size() == 3 ? io::number(j[2], "z") : 0.0};
}

inline json to_json(const std::vector<Point2>& pts) {
  json out = json::array();
  for (const auto& p : pts) out.push_back(to_json(p));
  return out;
}

inline json to_json(const std::vector<Point3>& pts) {
  json out = json::array();
  for (const auto& p : pts) out.push_back(to_json(p));
  return out;
}

inline std::vector<Point2> parse_points2(const json& j) {
  if (!j.is_array()) throw MalformedPayload("expected list of points");
  std::vector<Point2> out;
  for (const auto& p : j) out.push_back(parse_point2(p));
  return out;
}

// ---------------------------------------------------------------------------
// Entities

inline json to_json(const EntityClass& c) {
  return {{"name", c.name},
          {"vital", c.vital},
          {"impact_radius", c.base_impact_radius},
          {"amplifier", c.amplifier},
          {"symbol", c.symbol_code}};
}

inline EntityClass parse_entity_class(const json& j) {
  EntityClass c;
  c.name = io::string(j, "name");
  c.vital = io::boolean(j, "vital", false);
  c.base_impact_radius = io::number(j, "impact_radius", 0.0);
  c.amplifier = io::boolean(j, "amplifier", false);
  c.symbol_code = io::string(j, "symbol");
  return c;
}

inline json to_json(const Entity& e) {
  return {{"id", e.id},
          {"class", e.class_name},
          {"position", to_json(e.position)},
          {"heading", e.heading},
          {"last_update", e.last_update},
          {"version", e.version},
          {"owner", e.owner}};
}

inline Entity parse_entity(const json& j) {
  Entity e;
  e.id = io::string(j, "id");
  e.class_name = io::string(j, "class");
  e.position = parse_point3(io::field(j, "position"));
  e.heading = io::number(j, "heading", 0.0);
  e.last_update = io::number(j, "last_update", 0.0);
  e.version = j.contains("version") ? io::uint(j, "version") : 1;
  e.owner = j.contains("owner") ? io::string(j, "owner") : std::string("scenario");
  return e;
}

inline json to_json(const Stamp& s) { return {{"version", s.version}, {"owner", s.owner}}; }

inline Stamp parse_stamp(const json& j) { return {io::uint(j, "version"), io::string(j, "owner")}; }

// ---------------------------------------------------------------------------
// Zones and foci

inline json to_json(const OperationZone& z) {
  if (const auto* poly = std::get_if<Polygon2>(&z)) {
    return {{"polygon", to_json(poly->vertices())}};
  }
  const auto& c = std::get<Corridor>(z);
  return {{"corridor", {{"route", to_json(c.route.vertices())}, {"half_width", c.half_width}}}};
}

inline OperationZone parse_zone(const json& j) {
  try {
    if (j.contains("polygon")) return Polygon2{parse_points2(j["polygon"])};
    if (j.contains("corridor")) {
      const auto& c = j["corridor"];
      return Corridor{Polyline2{parse_points2(io::field(c, "route"))},
                      io::number(io::field(c, "half_width"), "half_width")};
    }
  } catch (const GeometryError& e) {
    throw MalformedPayload(std::string("zone: ") + e.what());
  }
  throw MalformedPayload("zone needs 'polygon' or 'corridor'");
}

inline json to_json(const FocusSet& f) {
  json j{{"user_position", to_json(f.user_position)},
         {"weapon_range", f.weapon_range},
         {"awareness_range", f.awareness_range}};
  j["time_window"] = f.time_window ? json(*f.time_window) : json(nullptr);
  return j;
}

inline FocusSet parse_focus(const json& j) {
  FocusSet f;
  if (j.contains("user_position")) f.user_position = parse_point3(j["user_position"]);
  f.weapon_range = io::number(j, "weapon_range", 0.0);
  f.awareness_range = io::number(j, "awareness_range", 0.0);
  if (j.contains("time_window") && !j["time_window"].is_null()) {
    f.time_window = io::number(j["time_window"], "time_window");
  }
  try {
    f.validate();
  } catch (const std::invalid_argument& e) {
    throw MalformedPayload(e.what());
  }
  return f;
}

// ---------------------------------------------------------------------------
// Decisions

inline json to_json(const FilterDecisionSet& d) {
  json decisions = json::object();
  for (const auto& [id, v] : d.decisions) {
    decisions[id] = {{"state", to_string(v.state)}, {"reason", to_string(v.reason)}};
  }
  return {{"decisions", decisions},
          {"input_revision", d.input_revision},
          {"focus", to_json(d.focus_snapshot)},
          {"zone", d.zone_snapshot ? to_json(*d.zone_snapshot) : json(nullptr)},
          {"time", d.time},
          {"preview", d.preview}};
}

inline Visibility parse_visibility(const std::string& s) {
  if (s == "show") return Visibility::show;
  if (s == "hide") return Visibility::hide;
  if (s == "tbd") return Visibility::to_be_determined;
  throw MalformedPayload("unknown visibility '" + s + "'");
}

inline Reason parse_reason(const std::string& s) {
  for (auto r : {Reason::none, Reason::vital_rule, Reason::zone_pass, Reason::zone_fail,
                 Reason::temporal_fail, Reason::default_hide}) {
    if (s == to_string(r)) return r;
  }
  throw MalformedPayload("unknown reason '" + s + "'");
}

inline FilterDecisionSet parse_decisions(const json& j) {
  FilterDecisionSet d;
  for (const auto& [id, v] : io::field(j, "decisions").items()) {
    d.decisions[id] = {parse_visibility(io::string(v, "state")), parse_reason(io::string(v, "reason"))};
  }
  d.input_revision = io::uint(j, "input_revision");
  d.focus_snapshot = parse_focus(io::field(j, "focus"));
  if (j.contains("zone") && !j["zone"].is_null()) d.zone_snapshot = parse_zone(j["zone"]);
  d.time = io::number(j, "time", 0.0);
  d.preview = io::boolean(j, "preview", false);
  return d;
}

// ---------------------------------------------------------------------------
// Occlusion

inline json to_json(const Occluder& o) {
  if (const auto* box = std::get_if<Aabb3>(&o.shape)) {
    return {{"id", o.id}, {"box", {{"min", to_json(box->min)}, {"max", to_json(box->max)}}}};
  }
  const auto& w = std::get<VerticalWall>(o.shape);
  return {{"id", o.id},
          {"wall", {{"from", to_json(w.from)}, {"to", to_json(w.to)}, {"height", w.height}}}};
}

inline json to_json(const std::vector<Polyline3>& lines) {
  json out = json::array();
  for (const auto& l : lines) out.push_back(to_json(l));
  return out;
}

inline json to_json(const RenderDirective& d) {
  json params = json::object();
  std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, OpacityParams>) {
          params = {{"zone", p.zone}, {"alpha", p.alpha}};
        } else if constexpr (std::is_same_v<T, StippleParams>) {
          params = {{"pattern", to_string(p.pattern)}, {"period", p.period}};
        } else if constexpr (std::is_same_v<T, GroundGridParams>) {
          params = {{"center", to_json(p.center)},
                    {"rings", p.rings},
                    {"drop_line", {{"top", to_json(p.drop_line.top)}, {"foot", to_json(p.drop_line.foot)}}}};
        } else if constexpr (std::is_same_v<T, EdgeMapParams>) {
          params = {{"outlines", to_json(p.outlines)}};
        } else if constexpr (std::is_same_v<T, VirtualWallParams>) {
          json layers = json::array();
          for (const auto& l : p.layers) {
            layers.push_back({{"layer", l.layer},
                              {"occluder", l.occluder_id},
                              {"anchor", to_json(l.anchor)},
                              {"normal", to_json(l.normal)},
                              {"line_count", l.line_count}});
          }
          params = {{"layers", layers}};
        } else if constexpr (std::is_same_v<T, TunnelParams>) {
          json squares = json::array();
          for (const auto& s : p.squares) {
            squares.push_back({{"occluder", s.occluder_id},
                               {"center", to_json(s.center)},
                               {"side", s.side},
                               {"outline", to_json(s.outline)}});
          }
          params = {{"squares", squares}};
        }
      },
      d.params);
  return {{"entity", d.entity_id},
          {"metaphor", std::string(to_string(d.metaphor))},
          {"line_only", d.line_drawing_only},
          {"params", params}};
}

// ---------------------------------------------------------------------------
// Routes and projection

inline json to_json(const Route& r) {
  return {{"id", r.id}, {"waypoints", to_json(r.waypoints)}, {"half_width", r.half_width}};
}

inline Route parse_route(const json& j) {
  Route r;
  r.id = io::string(j, "id");
  const auto& wps = io::field(j, "waypoints");
  if (!wps.is_array()) throw MalformedPayload("waypoints: expected list");
  for (const auto& w : wps) r.waypoints.push_back(parse_point3(w));
  r.half_width = io::number(j, "half_width", 50.0);
  try {
    r.validate();
  } catch (const MapError& e) {
    throw MalformedPayload(e.what());
  }
  return r;
}

inline json to_json(const TexturePlacement& p) {
  json quad = json::array();
  for (const auto& c : p.quad) quad.push_back(to_json(c));
  json h = json::array();
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) h.push_back(p.homography(r, c));
  }
  return {{"target", p.target},
          {"quad", quad},
          {"homography", h},
          {"source", p.source_id},
          {"timestamp", p.timestamp}};
}

inline json to_json(const CameraPose& c) {
  json rot = json::array();
  for (int r = 0; r < 3; ++r) {
    for (int k = 0; k < 3; ++k) rot.push_back(c.rotation(r, k));
  }
  return {{"position", to_json(c.position)},
          {"rotation", rot},
          {"image", json::array({c.image_width, c.image_height})},
          {"base_fov", c.base_fov_h},
          {"zoom", c.zoom}};
}

inline CameraPose parse_camera(const json& j) {
  CameraPose c;
  c.position = parse_point3(io::field(j, "position"));
  const auto& rot = io::field(j, "rotation");
  if (!rot.is_array() || rot.size() != 9) throw MalformedPayload("rotation: expected 9 numbers");
  for (int r = 0; r < 3; ++r) {
    for (int k = 0; k < 3; ++k) c.rotation(r, k) = io::number(rot[static_cast<std::size_t>(3 * r + k)], "rotation");
  }
  const auto& img = io::field(j, "image");
  if (!img.is_array() || img.size() != 2 || !img[0].is_number_integer() || !img[1].is_number_integer()) {
    throw MalformedPayload("image: expected [width, height]");
  }
  c.image_width = img[0].get<int>();
  c.image_height = img[1].get<int>();
  c.base_fov_h = io::number(j, "base_fov", 60.0);
  c.zoom = io::number(j, "zoom", 1.0);
  try {
    c.validate();
  } catch (const ProjectionError& e) {
    throw MalformedPayload(std::string("camera: ") + e.what());
  }
  return c;
}

}  // namespace sa
