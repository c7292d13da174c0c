// Headless acceptance run. One PASS/FAIL line per criterion; exit status is
// the number of failures.
#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>

#include "sa/json_io.hpp"
#include "sa/occlusion.hpp"
#include "sa/projection.hpp"
#include "sa/runner.hpp"
#include "support/oracles.hpp"
#include "support/scenes.hpp"
#include "support/traffic.hpp"

namespace {

using testing_support::Rng;
using testing_support::uniform;
using Clock = std::chrono::steady_clock;

const std::vector<std::string> kScenarios{"patrol_corridor", "defense_polygon", "occlusion_study", "c2_projection",
                                          "dynamic_events"};

std::string source_dir() {
  const char* d = std::getenv("SA_SOURCE_DIR");
  return d ? d : ".";
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(const char* name, const std::function<Outcome()>& check) {
  Outcome o;
  try {
    o = check();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  failures += !o.pass;
  std::printf("%s  %-28s %s\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// Shared by the oracle and vitality checks.
std::vector<testing_support::RandomScene> filter_scenes() {
  Rng rng(1001);
  std::vector<testing_support::RandomScene> out;
  for (int i = 0; i < 1000; ++i) out.push_back(testing_support::random_scene(rng));
  return out;
}

Outcome filter_oracle(std::vector<testing_support::RandomScene>& scenes) {
  std::size_t entities = 0, disagreements = 0;
  const auto t0 = Clock::now();
  for (auto& s : scenes) {
    const auto out = sa::run_filter(s.db, s.zone, s.focus, s.now);
    for (const auto& e : s.oracle.entities) {
      ++entities;
      const auto it = out.decisions.find(e.id);
      const bool shown = it != out.decisions.end() && it->second.state == sa::Visibility::show;
      disagreements += shown != oracle::shown(e, s.oracle);
    }
  }
  const double secs = seconds_since(t0);
  return {disagreements == 0 && secs < 5.0,
          fmt("1000 scenes, %zu entities, %zu disagreements, %.2f s (limit 5 s)", entities, disagreements, secs)};
}

Outcome vitality(std::vector<testing_support::RandomScene>& scenes) {
  std::size_t vital = 0, violations = 0;
  for (auto& s : scenes) {
    // Each scene is also filtered with a shrunken focus and a far-off zone.
    auto narrow = s.focus;
    narrow.awareness_range = 0;
    narrow.weapon_range = 0;
    narrow.time_window = 1.0;
    const sa::OperationZone far = sa::Polygon2{{{1e6, 1e6}, {1e6 + 1, 1e6}, {1e6, 1e6 + 1}}};
    for (const auto& out : {sa::run_filter(s.db, s.zone, s.focus, s.now), sa::run_filter(s.db, far, narrow, s.now)}) {
      for (const auto& e : s.oracle.entities) {
        if (!s.oracle.classes.at(e.cls).vital) continue;
        ++vital;
        violations += out.decisions.at(e.id).state != sa::Visibility::show;
      }
    }
  }
  return {violations == 0, fmt("%zu vital decisions, %zu violations", vital, violations)};
}

Outcome awareness_monotone() {
  Rng rng(7070);
  std::size_t violations = 0;
  for (int i = 0; i < 100; ++i) {
    auto s = testing_support::random_scene(rng);
    std::set<std::string> prev;
    for (int k = 0; k < 10; ++k) {
      s.focus.awareness_range = 60.0 * k + uniform(rng, 0, 30);
      const auto shown = sa::run_filter(s.db, s.zone, s.focus, s.now).shown();
      const std::set<std::string> cur(shown.begin(), shown.end());
      violations += !std::includes(cur.begin(), cur.end(), prev.begin(), prev.end());
      prev = cur;
    }
  }
  return {violations == 0, fmt("100 scenes x 10 radii, %zu violations", violations)};
}

Outcome patrol_golden() {
  const auto path = source_dir() + "/scenarios/patrol_corridor.yaml";
  const auto s = sa::load_scenario(path);
  std::ostringstream got;
  sa::write_records(got, s);
  std::ifstream f(source_dir() + "/tests/golden/patrol_corridor.ndjson", std::ios::binary);
  std::stringstream want;
  want << f.rdbuf();
  const bool golden = f && want.str() == got.str();

  std::map<std::string, std::string> class_of;
  for (const auto& e : s.entities) class_of[e.id] = e.class_name;
  const auto first = sa::run_scenario(s).front();
  std::size_t total = 0, show = 0, waypoints = 0, waypoints_shown = 0;
  for (const auto& [id, d] : first["decisions"]["decisions"].items()) {
    ++total;
    const bool shown = d["state"] == "show";
    show += shown;
    if (class_of[id] == "waypoint") {
      ++waypoints;
      waypoints_shown += shown;
    }
  }
  const bool corridor = first["decisions"]["zone"].contains("corridor");
  const bool pass = golden && corridor && total >= 30 && show < total && waypoints > 0 && waypoints_shown == waypoints;
  return {pass, fmt("%zu entities, %zu shown, waypoints %zu/%zu, corridor %s, golden %s", total, show,
                    waypoints_shown, waypoints, corridor ? "yes" : "no", golden ? "identical" : "differs")};
}

Outcome ground_grid() {
  const sa::DirectiveConfig cfg;
  sa::OcclusionInfo info;
  info.entity_id = "e";
  info.eye = {0, 0, 1.7};
  info.target = {90, 0, 0};
  info.distance = 90;
  const auto gg = std::get<sa::GroundGridParams>(sa::make_directive(sa::Metaphor::ground_grid, info, cfg).params);
  const double first_ring = gg.rings.empty() ? -1 : gg.rings.front();

  Rng rng(12);
  std::size_t mismatches = 0;
  std::set<int> seen;
  for (int i = 0; i < 100000; ++i) {
    double d = uniform(rng, 0, 150);
    if (i % 10 == 0) d = cfg.zone_boundaries[i / 10 % cfg.zone_boundaries.size()];
    if (i % 10 == 1) d = std::nextafter(cfg.zone_boundaries[i / 10 % cfg.zone_boundaries.size()], 0.0);
    // Walk outward across the boundaries until one lies beyond d.
    int zone = 1;
    while (zone <= static_cast<int>(cfg.zone_boundaries.size()) && d >= cfg.zone_boundaries[zone - 1]) ++zone;
    const int got = sa::classify_zone(d, cfg.zone_boundaries);
    mismatches += got != zone;
    seen.insert(got);
  }
  const bool pass = first_ring == 20.0 && cfg.zone_count() == 5 && seen.size() == 5 && mismatches == 0;
  return {pass, fmt("first ring %.6g m, %d zones (%zu reached), 100000 distances, %zu mismatches", first_ring,
                    cfg.zone_count(), seen.size(), mismatches)};
}

Outcome occlusion_layers() {
  Rng rng(4242);
  const sa::DirectiveConfig cfg;
  std::size_t mismatches = 0, undecided = 0, tunnel_bad = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto s = testing_support::random_occluder_scene(rng);
    const int layers = sa::count_layers(s.eye, s.target, s.occluders);
    int hits = 0, borderline = 0;
    for (const auto& o : s.oracle) {
      const auto v = oracle::sample_occluder({s.eye.x, s.eye.y, s.eye.z}, {s.target.x, s.target.y, s.target.z}, o,
                                             10000);
      hits += v == oracle::Verdict::hit;
      borderline += v == oracle::Verdict::borderline;
    }
    // A grazing occluder the sampling cannot settle may go either way.
    undecided += borderline > 0;
    mismatches += layers < hits || layers > hits + borderline;
    const auto info = sa::analyze_occlusion("e", s.eye, s.target, s.occluders, cfg.zone_boundaries);
    const auto tu = std::get<sa::TunnelParams>(sa::make_directive(sa::Metaphor::tunnel, info, cfg).params);
    tunnel_bad += static_cast<int>(tu.squares.size()) != layers || info.layers != layers;
  }
  return {mismatches == 0 && tunnel_bad == 0,
          fmt("1000 configurations x 10000 samples, %zu mismatches (%zu grazing), tunnel count off in %zu", mismatches,
              undecided, tunnel_bad)};
}

Outcome projection() {
  Rng rng(606);
  constexpr std::array<std::array<double, 2>, 4> kLocal{{{0, 0}, {1, 0}, {1, 1}, {0, 1}}};
  double corner_err = 0, mid_err = 0, trip_err = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto [cam, wall] = testing_support::random_camera_wall(rng);
    const auto tp = sa::wall_frustum_homography(cam, wall);
    for (std::size_t k = 0; k < 4; ++k) {
      const auto a = sa::apply_homography(tp.homography, kLocal[k][0], kLocal[k][1]);
      const auto b = sa::project_point(cam, wall.corners[k]).pixel;
      corner_err = std::max(corner_err, std::hypot(a.x - b.x, a.y - b.y) / std::max(1.0, std::hypot(b.x, b.y)));
    }
    for (int k = 0; k < 5; ++k) {
      const double u = k == 0 ? 0.5 : uniform(rng, 0, 1), v = k == 0 ? 0.5 : uniform(rng, 0, 1);
      const auto a = sa::apply_homography(tp.homography, u, v);
      const auto b = sa::project_point(cam, wall.at(u, v)).pixel;
      mid_err = std::max(mid_err, std::hypot(a.x - b.x, a.y - b.y));
    }
    const sa::PixelPoint px{uniform(rng, 0, cam.image_width), uniform(rng, 0, cam.image_height)};
    const auto back = sa::project_point(cam, sa::unproject(cam, px, uniform(rng, 0.5, 500))).pixel;
    trip_err = std::max(trip_err, std::hypot(back.x - px.x, back.y - px.y));
  }
  const double fov = sa::zoom_to_fov(2, 60);
  const bool pass = corner_err <= 1e-9 && mid_err <= 1e-6 && trip_err <= 1e-6 && std::abs(fov - 32.2042) <= 1e-3;
  return {pass, fmt("1000 pairs, corner rel %.2e, mid-plane %.2e px, round trip %.2e px, zoom_to_fov(2, 60) = %.4f",
                    corner_err, mid_err, trip_err, fov)};
}

Outcome convergence() {
  const auto t0 = Clock::now();
  int diverged = 0;
  std::size_t frames = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto r = testing_support::run_convergence(seed * 7919, 500, {1, 30, 0.3, 5, 0});
    diverged += !r.converged;
    frames += r.delivered;
  }
  const double secs = seconds_since(t0);
  return {diverged == 0 && secs < 10.0,
          fmt("20 seeds x 3 federates x 500 updates, %zu frames, %d diverged, %.2f s (limit 10 s)", frames, diverged,
              secs)};
}

Outcome replay_determinism() {
  int identical = 0, replayed = 0;
  std::string notes;
  for (const auto& name : kScenarios) {
    const auto s = sa::load_scenario(source_dir() + "/scenarios/" + name + ".yaml");
    std::ostringstream a, b;
    sa::write_records(a, s);
    sa::write_records(b, s);
    identical += a.str() == b.str();
    std::istringstream in(a.str());
    const auto r = sa::replay_records(in);
    replayed += r.ok();
    if (!r.ok()) notes += " " + name + ": " + r.summary();
  }
  return {identical == 5 && replayed == 5,
          fmt("%d/5 byte-identical, %d/5 replay ok", identical, replayed) + notes};
}

}  // namespace

int main() {
  auto scenes = filter_scenes();
  report("filter-oracle", [&] { return filter_oracle(scenes); });
  report("vitality-dominance", [&] { return vitality(scenes); });
  report("awareness-monotonicity", awareness_monotone);
  report("patrol-corridor-golden", patrol_golden);
  report("ground-grid-zones", ground_grid);
  report("occlusion-layers", occlusion_layers);
  report("projection", projection);
  report("distribution-convergence", convergence);
  report("replay-determinism", replay_determinism);
  std::printf("N/A   %-28s user-study error magnitudes and timings are human-subjects data; not reproduced\n",
              "user-study-results");
  std::printf("%d failed\n", failures);
  return failures;
}
