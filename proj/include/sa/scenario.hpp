// Declarative scenario files: YAML on disk, validated into typed inputs.
// Every problem found is reported with its line, not just the first one.
#pragma once

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "sa/entity.hpp"
#include "sa/filter.hpp"
#include "sa/json_io.hpp"
#include "sa/map_view.hpp"
#include "sa/occlusion.hpp"
#include "sa/projection.hpp"

namespace sa {

struct ScenarioIssue {
  int line = 0;  // 1-based; 0 when unknown
  std::string path;
  std::string message;
};

class ScenarioError : public std::runtime_error {
 public:
  ScenarioError(std::string source, std::vector<ScenarioIssue> issues)
      : std::runtime_error(format(source, issues)), source_(std::move(source)), issues_(std::move(issues)) {}

  const std::vector<ScenarioIssue>& issues() const { return issues_; }
  const std::string& source() const { return source_; }

 private:
  static std::string format(const std::string& source, const std::vector<ScenarioIssue>& issues) {
    std::string out;
    for (const auto& i : issues) {
      if (!out.empty()) out += '\n';
      out += source + ":" + std::to_string(i.line) + ": " + i.message;
      if (!i.path.empty()) out += " (at " + i.path + ")";
    }
    return out;
  }

  std::string source_;
  std::vector<ScenarioIssue> issues_;
};

struct UserPose {
  double t = 0.0;
  Point3 position;  // on the ground
  double heading = 0.0;
  double pitch = 0.0;
};

struct CameraSpec {
  std::string id;
  CameraPose pose;
  double timestamp = 0.0;
};

struct ZoneSpec {
  std::variant<std::monostate, OperationZone, std::string> value;  // none, literal, route id
};

struct ProjectionSettings {
  std::optional<std::pair<Point2, Point2>> aoi;
  double cell = 25.0;
  double video_range = 10.0;
};

struct ScenarioEvent {
  double t = 0.0;
  std::string kind;  // pose, focus, zone, route, entity, remove, camera, metaphor
  json body;
};

struct Scenario {
  std::string name;
  std::uint64_t seed = 0;
  std::vector<EntityClass> classes;
  std::vector<Entity> entities;
  std::vector<Occluder> occluders;
  std::vector<Route> routes;
  ZoneSpec zone;
  std::string user_id = "user";
  double eye_height = 1.7;
  std::vector<UserPose> poses;
  FocusSet focus;
  AmplificationConfig amplification;
  DirectiveConfig occlusion;
  std::vector<CameraSpec> cameras;
  std::vector<WallRect> walls;
  ProjectionSettings projection;
  std::vector<ScenarioEvent> events;
  json source;  // the document as loaded; enough to rebuild the scenario
};

// ---------------------------------------------------------------------------
// YAML to JSON with a line for every node

using LineMap = std::map<std::string, int>;

namespace detail {

inline json yaml_scalar(const YAML::Node& n) {
  const std::string& s = n.Scalar();
  if (n.Tag() == "!") return s;  // quoted
  if (s == "~" || s == "null" || s == "Null" || s == "NULL" || s.empty()) return nullptr;
  if (s == "true" || s == "True" || s == "TRUE") return true;
  if (s == "false" || s == "False" || s == "FALSE") return false;
  try {
    std::size_t pos = 0;
    if (s.find_first_of(".eE") == std::string::npos && s.find("0x") == std::string::npos) {
      const long long v = std::stoll(s, &pos);
      if (pos == s.size()) return v >= 0 ? json(static_cast<std::uint64_t>(v)) : json(v);
    }
    const double d = std::stod(s, &pos);
    if (pos == s.size() && std::isfinite(d)) return d;
  } catch (const std::exception&) {
  }
  return s;
}

inline json yaml_to_json(const YAML::Node& n, const std::string& path, LineMap& lines) {
  lines[path] = n.Mark().line + 1;
  switch (n.Type()) {
    case YAML::NodeType::Null:
    case YAML::NodeType::Undefined:
      return nullptr;
    case YAML::NodeType::Scalar:
      return yaml_scalar(n);
    case YAML::NodeType::Sequence: {
      json out = json::array();
      std::size_t i = 0;
      for (const auto& item : n) {
        out.push_back(yaml_to_json(item, path + "/" + std::to_string(i), lines));
        ++i;
      }
      return out;
    }
    case YAML::NodeType::Map: {
      json out = json::object();
      for (const auto& kv : n) {
        const std::string key = kv.first.as<std::string>();
        out[key] = yaml_to_json(kv.second, path + "/" + key, lines);
      }
      return out;
    }
  }
  return nullptr;
}

class IssueSink {
 public:
  explicit IssueSink(const LineMap* lines) : lines_(lines) {}

  void add(const std::string& path, const std::string& message) {
    issues_.push_back({line_of(path), path, message});
  }

  template <typename F>
  void guard(const std::string& path, F&& f) {
    try {
      f();
    } catch (const std::exception& e) {
      add(path, e.what());
    }
  }

  const std::vector<ScenarioIssue>& issues() const { return issues_; }

 private:
  int line_of(std::string path) const {
    if (!lines_) return 0;
    for (;;) {
      if (auto it = lines_->find(path); it != lines_->end()) return it->second;
      const auto cut = path.rfind('/');
      if (cut == std::string::npos) return 0;
      path.erase(cut);
    }
  }

  const LineMap* lines_;
  std::vector<ScenarioIssue> issues_;
};

inline const json& list_at(const json& doc, const char* key) {
  static const json empty = json::array();
  auto it = doc.find(key);
  if (it == doc.end() || it->is_null()) return empty;
  if (!it->is_array()) throw MalformedPayload(std::string(key) + ": expected list");
  return *it;
}

inline double time_of(const json& j) {
  const double t = io::number(io::field(j, "t"), "t");
  if (!(t >= 0.0)) throw MalformedPayload("t must be >= 0");
  return t;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Typed parsers for scenario sections

/// Camera with either `look_at` (plus optional `up`) or an explicit
/// world-to-camera `rotation`.
inline CameraSpec parse_camera_spec(const json& j) {
  CameraSpec c;
  c.id = io::string(j, "id");
  if (j.contains("rotation")) {
    c.pose = parse_camera(j);
    c.timestamp = io::number(j, "timestamp", 0.0);
    return c;
  }
  c.pose.position = parse_point3(io::field(j, "position"));
  const Point3 target = parse_point3(io::field(j, "look_at"));
  const Point3 up = j.contains("up") ? parse_point3(j["up"]) : Point3{0, 0, 1};
  try {
    c.pose.rotation = look_at(c.pose.position, target, up);
  } catch (const ProjectionError& e) {
    throw MalformedPayload(std::string("camera '") + c.id + "': " + e.what());
  }
  if (j.contains("image")) {
    const auto& img = j["image"];
    if (!img.is_array() || img.size() != 2 || !img[0].is_number_unsigned() || !img[1].is_number_unsigned()) {
      throw MalformedPayload("image: expected [width, height]");
    }
    c.pose.image_width = img[0].get<int>();
    c.pose.image_height = img[1].get<int>();
  }
  c.pose.base_fov_h = io::number(j, "fov", 60.0);
  c.pose.zoom = io::number(j, "zoom", 1.0);
  c.timestamp = io::number(j, "timestamp", 0.0);
  c.pose.validate();
  return c;
}

inline Occluder parse_occluder(const json& j) {
  Occluder o;
  o.id = io::string(j, "id");
  if (j.contains("box")) {
    const auto& b = j["box"];
    o.shape = Aabb3::make(parse_point3(io::field(b, "min")), parse_point3(io::field(b, "max")));
  } else if (j.contains("wall")) {
    const auto& w = j["wall"];
    o.shape = VerticalWall{parse_point2(io::field(w, "from")), parse_point2(io::field(w, "to")),
                           io::number(io::field(w, "height"), "height")};
  } else {
    throw MalformedPayload("occluder needs 'box' or 'wall'");
  }
  o.validate();
  return o;
}

inline WallRect parse_wall_rect(const json& j) {
  const auto& c = io::field(j, "corners");
  if (!c.is_array() || c.size() != 4) throw MalformedPayload("corners: expected 4 points");
  return WallRect::make(io::string(j, "id"),
                        {parse_point3(c[0]), parse_point3(c[1]), parse_point3(c[2]), parse_point3(c[3])});
}

inline DirectiveConfig parse_occlusion_config(const json& j) {
  DirectiveConfig c;
  if (j.contains("metaphor")) c.metaphor = parse_metaphor(io::string(j, "metaphor"));
  auto numbers = [](const json& v, const char* what) {
    if (!v.is_array()) throw MalformedPayload(std::string(what) + ": expected list");
    std::vector<double> out;
    for (const auto& x : v) out.push_back(io::number(x, what));
    return out;
  };
  if (j.contains("zone_boundaries")) c.zone_boundaries = numbers(j["zone_boundaries"], "zone_boundaries");
  if (j.contains("opacity")) c.opacity_table = numbers(j["opacity"], "opacity");
  c.stipple_period = io::number(j, "stipple_period", c.stipple_period);
  if (j.contains("grid")) {
    const auto& g = j["grid"];
    c.grid_first_ring = io::number(g, "first_ring", c.grid_first_ring);
    c.grid_spacing = io::number(g, "spacing", c.grid_spacing);
    c.grid_max_distance = io::number(g, "max_distance", c.grid_max_distance);
  }
  if (j.contains("wall")) {
    const auto& w = j["wall"];
    c.wall_base_lines = static_cast<int>(io::number(w, "base_lines", c.wall_base_lines));
    c.wall_line_increment = static_cast<int>(io::number(w, "increment", c.wall_line_increment));
  }
  if (j.contains("tunnel")) {
    const auto& t = j["tunnel"];
    c.tunnel_side = io::number(t, "side", c.tunnel_side);
    c.tunnel_reference_distance = io::number(t, "reference_distance", c.tunnel_reference_distance);
  }
  c.validate();
  return c;
}

/// Zone section: a literal polygon or corridor, or {route: <id>}.
inline ZoneSpec parse_zone_spec(const json& j) {
  if (j.is_null()) return {};
  if (j.contains("route")) return {io::string(j, "route")};
  return {parse_zone(j)};
}

inline UserPose parse_pose(const json& j, double t) {
  UserPose p;
  p.t = t;
  const Point3 pos = parse_point3(io::field(j, "position"));
  p.position = {pos.x, pos.y, 0.0};
  p.heading = io::number(j, "heading", 0.0);
  p.pitch = io::number(j, "pitch", 0.0);
  if (!(p.heading >= 0.0 && p.heading < 360.0)) throw MalformedPayload("heading must be in [0, 360)");
  if (!(p.pitch >= -90.0 && p.pitch <= 90.0)) throw MalformedPayload("pitch must be in [-90, 90]");
  return p;
}

/// Focus fields present in `j` overwrite those of `base`.
inline FocusSet merge_focus(FocusSet base, const json& j) {
  if (!j.is_object()) throw MalformedPayload("focus: expected mapping");
  base.weapon_range = io::number(j, "weapon_range", base.weapon_range);
  base.awareness_range = io::number(j, "awareness_range", base.awareness_range);
  if (j.contains("time_window")) {
    base.time_window.reset();
    if (!j["time_window"].is_null()) base.time_window = io::number(j["time_window"], "time_window");
  }
  base.validate();
  return base;
}

inline constexpr std::array<std::string_view, 8> kEventKinds{"pose",   "focus",  "zone",   "route",
                                                            "entity", "remove", "camera", "metaphor"};

/// Builds a scenario from its JSON form. `lines` (optional) maps JSON
/// pointer paths to source lines for error reporting.
inline Scenario build_scenario(const json& doc, const std::string& source_name = "<scenario>",
                               const LineMap* lines = nullptr) {
  detail::IssueSink sink(lines);
  Scenario s;
  s.source = doc;
  if (!doc.is_object()) {
    sink.add("", "scenario must be a mapping");
    throw ScenarioError(source_name, sink.issues());
  }

  sink.guard("/name", [&] { s.name = doc.contains("name") ? io::string(doc, "name") : std::string(); });
  sink.guard("/seed", [&] { s.seed = doc.contains("seed") ? io::uint(doc, "seed") : 0; });

  auto each = [&](const char* key, auto&& fn) {
    const json* list = nullptr;
    sink.guard(std::string("/") + key, [&] { list = &detail::list_at(doc, key); });
    if (!list) return;
    for (std::size_t i = 0; i < list->size(); ++i) {
      const std::string path = std::string("/") + key + "/" + std::to_string(i);
      sink.guard(path, [&] { fn((*list)[i], path); });
    }
  };

  std::set<std::string> class_names;
  each("classes", [&](const json& j, const std::string&) {
    auto c = parse_entity_class(j);
    c.validate();
    if (!class_names.insert(c.name).second) throw MalformedPayload("duplicate class '" + c.name + "'");
    s.classes.push_back(std::move(c));
  });

  std::set<std::string> entity_ids;
  auto check_entity = [&](const Entity& e, const std::string& path) {
    if (!class_names.contains(e.class_name)) sink.add(path + "/class", "unknown entity class '" + e.class_name + "'");
    e.validate();
  };
  each("entities", [&](const json& j, const std::string& path) {
    auto e = parse_entity(j);
    if (!entity_ids.insert(e.id).second) throw MalformedPayload("duplicate entity id '" + e.id + "'");
    check_entity(e, path);
    s.entities.push_back(std::move(e));
  });

  std::set<std::string> occluder_ids;
  each("occluders", [&](const json& j, const std::string&) {
    auto o = parse_occluder(j);
    if (!occluder_ids.insert(o.id).second) throw MalformedPayload("duplicate occluder id '" + o.id + "'");
    s.occluders.push_back(std::move(o));
  });

  std::set<std::string> route_ids;
  each("routes", [&](const json& j, const std::string&) {
    auto r = parse_route(j);
    if (!route_ids.insert(r.id).second) throw MalformedPayload("duplicate route id '" + r.id + "'");
    s.routes.push_back(std::move(r));
  });

  auto check_zone = [&](const ZoneSpec& z, const std::string& path) {
    if (const auto* ref = std::get_if<std::string>(&z.value); ref && !route_ids.contains(*ref)) {
      sink.add(path + "/route", "zone refers to unknown route '" + *ref + "'");
    }
  };
  if (doc.contains("zone")) {
    sink.guard("/zone", [&] {
      s.zone = parse_zone_spec(doc["zone"]);
      check_zone(s.zone, "/zone");
    });
  }

  if (doc.contains("user")) {
    const auto& u = doc["user"];
    sink.guard("/user", [&] {
      if (!u.is_object()) throw MalformedPayload("user: expected mapping");
      if (u.contains("id")) s.user_id = io::string(u, "id");
      s.eye_height = io::number(u, "eye_height", s.eye_height);
      if (!(s.eye_height >= 0.0)) throw MalformedPayload("eye_height must be >= 0");
    });
    const json* poses = nullptr;
    sink.guard("/user/poses", [&] { poses = &detail::list_at(u, "poses"); });
    if (poses) {
      for (std::size_t i = 0; i < poses->size(); ++i) {
        const std::string path = "/user/poses/" + std::to_string(i);
        sink.guard(path, [&] {
          const auto p = parse_pose((*poses)[i], detail::time_of((*poses)[i]));
          if (!s.poses.empty() && p.t < s.poses.back().t) {
            sink.add(path + "/t", "pose timestamps must be non-decreasing");
          }
          s.poses.push_back(p);
        });
      }
    }
  }
  if (s.poses.empty()) {
    sink.add("/user", "user needs at least one pose");
  } else if (s.poses.front().t != 0.0) {
    sink.add("/user/poses/0/t", "the first pose must be at t = 0");
  }

  if (doc.contains("focus")) sink.guard("/focus", [&] { s.focus = merge_focus(s.focus, doc["focus"]); });
  if (doc.contains("amplification")) {
    sink.guard("/amplification", [&] {
      const auto& a = doc["amplification"];
      s.amplification.factor = io::number(a, "factor", s.amplification.factor);
      s.amplification.distance = io::number(a, "distance", s.amplification.distance);
      if (!(s.amplification.factor >= 1.0) || !(s.amplification.distance >= 0.0)) {
        throw MalformedPayload("amplification needs factor >= 1 and distance >= 0");
      }
    });
  }
  if (doc.contains("occlusion")) sink.guard("/occlusion", [&] { s.occlusion = parse_occlusion_config(doc["occlusion"]); });

  std::set<std::string> camera_ids;
  each("cameras", [&](const json& j, const std::string&) {
    auto c = parse_camera_spec(j);
    if (!camera_ids.insert(c.id).second) throw MalformedPayload("duplicate camera id '" + c.id + "'");
    s.cameras.push_back(std::move(c));
  });
  std::set<std::string> wall_ids;
  each("walls", [&](const json& j, const std::string&) {
    auto w = parse_wall_rect(j);
    if (!wall_ids.insert(w.id).second) throw MalformedPayload("duplicate wall id '" + w.id + "'");
    s.walls.push_back(std::move(w));
  });
  if (doc.contains("projection")) {
    sink.guard("/projection", [&] {
      const auto& p = doc["projection"];
      if (p.contains("aoi")) {
        const Point2 lo = parse_point2(io::field(p["aoi"], "min"));
        const Point2 hi = parse_point2(io::field(p["aoi"], "max"));
        if (!(lo.x < hi.x && lo.y < hi.y)) throw MalformedPayload("aoi: min must be below max");
        s.projection.aoi = {lo, hi};
      }
      s.projection.cell = io::number(p, "cell", s.projection.cell);
      s.projection.video_range = io::number(p, "video_range", s.projection.video_range);
      if (!(s.projection.cell > 0.0) || !(s.projection.video_range > 0.0)) {
        throw MalformedPayload("projection cell and video_range must be > 0");
      }
    });
  }

  // Events are checked against the ids known at their point in the script.
  std::set<std::string> live = entity_ids;
  FocusSet focus = s.focus;
  double last_t = 0.0;
  each("events", [&](const json& j, const std::string& path) {
    ScenarioEvent ev;
    ev.t = detail::time_of(j);
    if (ev.t < last_t) sink.add(path + "/t", "event timestamps must be non-decreasing");
    last_t = std::max(last_t, ev.t);
    std::vector<std::string> kinds;
    for (auto k : kEventKinds) {
      if (j.contains(std::string(k))) kinds.emplace_back(k);
    }
    if (kinds.size() != 1) throw MalformedPayload("event needs exactly one of pose, focus, zone, route, entity, remove, camera, metaphor");
    ev.kind = kinds.front();
    ev.body = j[ev.kind];
    const std::string body_path = path + "/" + ev.kind;
    sink.guard(body_path, [&] {
      if (ev.kind == "pose") {
        parse_pose(ev.body, ev.t);
      } else if (ev.kind == "focus") {
        focus = merge_focus(focus, ev.body);
      } else if (ev.kind == "zone") {
        check_zone(parse_zone_spec(ev.body), body_path);
      } else if (ev.kind == "route") {
        route_ids.insert(parse_route(ev.body).id);
      } else if (ev.kind == "entity") {
        const auto e = parse_entity(ev.body);
        check_entity(e, body_path);
        live.insert(e.id);
      } else if (ev.kind == "remove") {
        if (!ev.body.is_string()) throw MalformedPayload("remove: expected entity id");
        const auto id = ev.body.get<std::string>();
        if (!live.erase(id)) sink.add(body_path, "remove refers to unknown entity '" + id + "'");
      } else if (ev.kind == "camera") {
        camera_ids.insert(parse_camera_spec(ev.body).id);
      } else {
        if (!ev.body.is_string()) throw MalformedPayload("metaphor: expected name");
        parse_metaphor(ev.body.get<std::string>());
      }
    });
    s.events.push_back(std::move(ev));
  });

  for (const auto& key : doc.items()) {
    static const std::set<std::string> known{"name",      "seed",      "classes",  "entities",      "occluders",
                                             "routes",    "zone",      "user",     "focus",         "amplification",
                                             "occlusion", "cameras",   "walls",    "projection",    "events"};
    if (!known.contains(key.key())) sink.add("/" + key.key(), "unknown section '" + key.key() + "'");
  }

  if (!sink.issues().empty()) {
    auto issues = sink.issues();
    std::stable_sort(issues.begin(), issues.end(),
                     [](const ScenarioIssue& a, const ScenarioIssue& b) { return a.line < b.line; });
    throw ScenarioError(source_name, std::move(issues));
  }
  return s;
}

inline Scenario load_scenario_text(const std::string& text, const std::string& source_name = "<scenario>") {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw ScenarioError(source_name, {{e.mark.line + 1, "", e.msg}});
  }
  LineMap lines;
  const json doc = detail::yaml_to_json(root, "", lines);
  return build_scenario(doc, source_name, &lines);
}

inline Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioError(path, {{0, "", "cannot open file"}});
  std::stringstream buf;
  buf << in.rdbuf();
  return load_scenario_text(buf.str(), path);
}

}  // namespace sa
