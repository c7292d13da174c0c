// Headless execution of a scenario into an NDJSON record stream, and replay
// verification of such a stream.
#pragma once

#include <algorithm>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "sa/filter.hpp"
#include "sa/json_io.hpp"
#include "sa/map_view.hpp"
#include "sa/occlusion.hpp"
#include "sa/projection.hpp"
#include "sa/scenario.hpp"

namespace sa {

inline constexpr std::string_view kRecordFormat = "sa-records/1";

/// Live pipeline state for one user session.
class Engine {
 public:
  explicit Engine(const Scenario& s)
      : eye_height_(s.eye_height),
        user_id_(s.user_id),
        occluders_(s.occluders),
        zone_(s.zone),
        focus_(s.focus),
        amp_(s.amplification),
        cfg_(s.occlusion),
        walls_(s.walls),
        projection_(s.projection) {
    for (const auto& c : s.classes) db_.add_class(c);
    for (const auto& e : s.entities) db_.upsert(e);
    for (const auto& r : s.routes) routes_[r.id] = r;
    for (const auto& c : s.cameras) cameras_[c.id] = c;
    std::sort(walls_.begin(), walls_.end(), [](const WallRect& a, const WallRect& b) { return a.id < b.id; });
    apply_pose(s.poses.front());
  }

  void apply_pose(const UserPose& p) {
    pose_ = p;
    map_active_ = activation_.set_pitch(p.pitch);
  }

  /// Applies one scripted or live event. Entity events without a version
  /// supersede whatever is stored.
  void apply(const ScenarioEvent& ev) {
    const json& b = ev.body;
    if (ev.kind == "pose") {
      apply_pose(parse_pose(b, ev.t));
    } else if (ev.kind == "focus") {
      focus_ = merge_focus(focus_, b);
    } else if (ev.kind == "zone") {
      zone_ = parse_zone_spec(b);
    } else if (ev.kind == "route") {
      auto r = parse_route(b);
      routes_[r.id] = std::move(r);
    } else if (ev.kind == "entity") {
      Entity e = parse_entity(b);
      if (!b.contains("version")) e.version = next_version(e.id);
      db_.upsert(e);
    } else if (ev.kind == "remove") {
      const auto id = b.get<std::string>();
      db_.remove(id, next_version(id), "scenario");
    } else if (ev.kind == "camera") {
      auto c = parse_camera_spec(b);
      if (!b.contains("timestamp")) c.timestamp = ev.t;
      cameras_[c.id] = std::move(c);
    } else if (ev.kind == "metaphor") {
      cfg_.metaphor = parse_metaphor(b.get<std::string>());
    } else {
      throw MalformedPayload("unknown event kind '" + ev.kind + "'");
    }
  }

  std::optional<OperationZone> zone() const {
    if (const auto* z = std::get_if<OperationZone>(&zone_.value)) return *z;
    if (const auto* ref = std::get_if<std::string>(&zone_.value)) {
      auto it = routes_.find(*ref);
      if (it != routes_.end() && it->second.waypoints.size() >= 2) return route_to_zone(it->second);
    }
    return std::nullopt;
  }

  FocusSet focus() const {
    FocusSet f = focus_;
    f.user_position = pose_.position;
    return f;
  }

  Point3 eye() const { return pose_.position + Point3{0, 0, eye_height_}; }

  FilterDecisionSet decide(double t) const {
    const RecomputeTrigger::Request req{pose_.position, focus(), zone(), 0};
    return run_request(db_, req, t, amp_);
  }

  /// One directive per Show entity, ascending by id.
  std::vector<RenderDirective> directives(const FilterDecisionSet& d) const {
    std::vector<RenderDirective> out;
    const Point3 from = eye();
    for (const auto& id : d.shown()) {
      const Entity* e = db_.find(id);
      if (!e) continue;
      OcclusionInfo info;
      if (e->position == from) {
        info.entity_id = id;
        info.eye = info.target = from;
      } else {
        info = analyze_occlusion(id, from, e->position, occluders_, cfg_.zone_boundaries);
      }
      out.push_back(make_directive(cfg_.metaphor, info, cfg_));
    }
    return out;
  }

  /// Per camera (ascending id): the floating video quad, every wall the
  /// camera fully sees, then ground cells of the area of interest.
  std::vector<TexturePlacement> placements() const {
    std::vector<TexturePlacement> out;
    for (const auto& [id, cam] : cameras_) {
      const auto& pose = cam.pose;
      const double w = pose.image_width, h = pose.image_height;
      TexturePlacement video;
      video.target = "video:" + id;
      video.quad = image_plane_quad(pose, projection_.video_range);
      video.homography = homography_from_correspondences(
          {Eigen::Vector2d{0, 0}, {1, 0}, {1, 1}, {0, 1}}, {Eigen::Vector2d{0, 0}, {w, 0}, {w, h}, {0, h}});
      video.source_id = id;
      video.timestamp = cam.timestamp;
      out.push_back(std::move(video));
      for (const auto& wall : walls_) {
        try {
          out.push_back(wall_frustum_homography(pose, wall, {}, id, cam.timestamp));
        } catch (const ProjectionError&) {
        }
      }
      if (projection_.aoi) {
        const auto cells = grid_ground(projection_.aoi->first, projection_.aoi->second, projection_.cell);
        auto ground = place_on_ground(pose, cells, id, cam.timestamp);
        out.insert(out.end(), std::make_move_iterator(ground.begin()), std::make_move_iterator(ground.end()));
      }
    }
    return out;
  }

  json record(double t) const {
    const auto d = decide(t);
    json directives = json::array();
    for (const auto& dir : this->directives(d)) directives.push_back(to_json(dir));
    json out{{"t", t},
             {"user",
              {{"id", user_id_},
               {"position", to_json(pose_.position)},
               {"heading", pose_.heading},
               {"pitch", pose_.pitch},
               {"map_active", map_active_},
               {"metaphor", std::string(to_string(cfg_.metaphor))}}},
             {"decisions", to_json(d)},
             {"directives", std::move(directives)}};
    if (!cameras_.empty()) {
      json placements = json::array();
      for (const auto& p : this->placements()) placements.push_back(to_json(p));
      out["placements"] = std::move(placements);
    }
    return out;
  }

  const EntityDatabase& db() const { return db_; }
  EntityDatabase& db() { return db_; }
  const std::map<std::string, Route>& routes() const { return routes_; }
  const std::map<std::string, CameraSpec>& cameras() const { return cameras_; }
  const UserPose& pose() const { return pose_; }
  const AmplificationConfig& amplification() const { return amp_; }
  const std::string& user_id() const { return user_id_; }

 private:
  std::uint64_t next_version(const EntityId& id) const {
    const auto s = db_.stamp_of(id);
    return s ? s->version + 1 : 1;
  }

  double eye_height_;
  std::string user_id_;
  EntityDatabase db_;
  std::vector<Occluder> occluders_;
  std::map<std::string, Route> routes_;
  ZoneSpec zone_;
  FocusSet focus_;
  AmplificationConfig amp_;
  DirectiveConfig cfg_;
  std::map<std::string, CameraSpec> cameras_;
  std::vector<WallRect> walls_;
  ProjectionSettings projection_;
  UserPose pose_;
  MapActivation activation_;
  bool map_active_ = false;
};

/// t = 0 plus every distinct pose and event time, ascending.
inline std::vector<double> record_times(const Scenario& s) {
  std::set<double> times{0.0};
  for (const auto& p : s.poses) times.insert(p.t);
  for (const auto& e : s.events) times.insert(e.t);
  return {times.begin(), times.end()};
}

/// One record per distinct time, after every input at that time is applied.
inline std::vector<json> run_scenario(const Scenario& s) {
  Engine engine(s);
  std::vector<json> out;
  std::size_t pi = 1, ei = 0;
  for (const double t : record_times(s)) {
    for (; pi < s.poses.size() && s.poses[pi].t == t; ++pi) engine.apply_pose(s.poses[pi]);
    for (; ei < s.events.size() && s.events[ei].t == t; ++ei) engine.apply(s.events[ei]);
    out.push_back(engine.record(t));
  }
  return out;
}

inline json record_header(const Scenario& s) {
  return {{"format", std::string(kRecordFormat)}, {"seed", s.seed}, {"scenario", s.source}};
}

inline void write_records(std::ostream& os, const Scenario& s) {
  os << canonical(record_header(s)) << '\n';
  for (const auto& r : run_scenario(s)) os << canonical(r) << '\n';
  os.flush();
}

/// Placements of every scenario camera at its initial state.
inline std::vector<TexturePlacement> project_scenario(const Scenario& s) { return Engine(s).placements(); }

// ---------------------------------------------------------------------------
// Replay

class RecordFileError : public std::runtime_error {
 public:
  RecordFileError(std::size_t line, const std::string& message)
      : std::runtime_error("line " + std::to_string(line) + ": " + message), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

struct Divergence {
  std::size_t line = 0;  // 1-based line in the record file
  double time = 0.0;
  std::string entity;  // empty when the difference is not tied to an entity
  std::string what;
};

struct ReplayReport {
  std::size_t records = 0;
  std::optional<Divergence> divergence;

  bool ok() const { return !divergence.has_value(); }

  std::string summary() const {
    if (ok()) return "replay ok: " + std::to_string(records) + " records match";
    const auto& d = *divergence;
    std::ostringstream os;
    os << "divergence at line " << d.line << ", t=" << json(d.time).dump();
    if (!d.entity.empty()) os << ", entity " << d.entity;
    os << ": " << d.what;
    return os.str();
  }
};

namespace detail {

inline const json& at_or_null(const json& j, const char* key) {
  static const json null;
  if (!j.is_object()) return null;
  auto it = j.find(key);
  return it == j.end() ? null : *it;
}

/// Locates the first differing entity between two records of the same time.
inline Divergence first_difference(const json& want, const json& got, std::size_t line) {
  Divergence d;
  d.line = line;
  const json& t = at_or_null(got, "t");
  d.time = t.is_number() ? t.get<double>() : at_or_null(want, "t").get<double>();
  if (at_or_null(want, "t") != t) {
    d.what = "time differs (expected " + at_or_null(want, "t").dump() + ")";
    return d;
  }
  const json& wd = at_or_null(at_or_null(want, "decisions"), "decisions");
  const json& gd = at_or_null(at_or_null(got, "decisions"), "decisions");
  std::set<std::string> ids;
  for (const auto* m : {&wd, &gd}) {
    if (m->is_object()) {
      for (const auto& [k, _] : m->items()) ids.insert(k);
    }
  }
  for (const auto& id : ids) {
    const json& a = at_or_null(wd, id.c_str());
    const json& b = at_or_null(gd, id.c_str());
    if (a != b) {
      d.entity = id;
      d.what = "decision expected " + a.dump() + ", recorded " + b.dump();
      return d;
    }
  }
  const json& wdir = at_or_null(want, "directives");
  const json& gdir = at_or_null(got, "directives");
  const std::size_t n = std::max(wdir.size(), gdir.size());
  for (std::size_t i = 0; i < n; ++i) {
    const json a = i < wdir.size() ? wdir[i] : json();
    const json b = gdir.is_array() && i < gdir.size() ? gdir[i] : json();
    if (a != b) {
      const json& ent = at_or_null(a.is_null() ? b : a, "entity");
      d.entity = ent.is_string() ? ent.get<std::string>() : "";
      d.what = "directive differs";
      return d;
    }
  }
  for (const auto& [key, value] : want.items()) {
    if (at_or_null(got, key.c_str()) != value) {
      d.what = key + " differs";
      return d;
    }
  }
  d.what = want == got ? "encoding differs" : "unexpected fields";
  return d;
}

}  // namespace detail

/// Re-runs the scenario embedded in the header and compares every record
/// byte for byte.
inline ReplayReport replay_records(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw RecordFileError(1, "empty record file");
  json header;
  try {
    header = json::parse(line);
  } catch (const json::parse_error& e) {
    throw RecordFileError(1, std::string("header is not JSON: ") + e.what());
  }
  if (!header.is_object() || detail::at_or_null(header, "format") != std::string(kRecordFormat)) {
    throw RecordFileError(1, "not a " + std::string(kRecordFormat) + " file");
  }
  Scenario s;
  try {
    s = build_scenario(detail::at_or_null(header, "scenario"), "<record header>");
  } catch (const ScenarioError& e) {
    throw RecordFileError(1, std::string("embedded scenario is invalid: ") + e.what());
  }

  std::vector<std::string> recorded;
  std::size_t n = 1;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty() && in.peek() == std::char_traits<char>::eof()) break;
    if (!json::accept(line)) throw RecordFileError(n, "record is not JSON");
    recorded.push_back(line);
  }

  const auto expected = run_scenario(s);
  ReplayReport report;
  report.records = recorded.size();
  for (std::size_t i = 0; i < std::max(expected.size(), recorded.size()); ++i) {
    const std::size_t at = i + 2;
    if (i >= recorded.size()) {
      report.divergence = Divergence{at, expected[i]["t"].get<double>(), {}, "record missing"};
      return report;
    }
    if (i >= expected.size()) {
      const json got = json::parse(recorded[i]);
      const json& t = detail::at_or_null(got, "t");
      report.divergence = Divergence{at, t.is_number() ? t.get<double>() : 0.0, {}, "unexpected extra record"};
      return report;
    }
    const std::string want = canonical(expected[i]);
    if (want != recorded[i]) {
      report.divergence = detail::first_difference(expected[i], json::parse(recorded[i]), at);
      return report;
    }
  }
  return report;
}

inline ReplayReport replay_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return replay_records(in);
}

}  // namespace sa
