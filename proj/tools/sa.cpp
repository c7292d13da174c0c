// sa: run, serve, replay and project scenarios.
//
// Exit codes: 0 success, 1 validation failure, 2 environment failure.

#include <CLI11.hpp>

#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "sa/runner.hpp"
#include "sa/scenario.hpp"
#include "sa/server.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kInvalid = 1;
constexpr int kEnvironment = 2;

struct Failure {
  int code;
  std::string message;
};

sa::Scenario load(const std::string& path) {
  if (!std::filesystem::is_regular_file(path)) throw Failure{kEnvironment, "no such scenario file: " + path};
  return sa::load_scenario(path);
}

/// Writes to `path`, or stdout when empty or "-".
template <typename F>
void with_output(const std::string& path, F&& write) {
  if (path.empty() || path == "-") {
    write(std::cout);
    std::cout.flush();
    return;
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Failure{kEnvironment, "cannot write " + path};
  write(os);
  os.flush();
  if (!os) throw Failure{kEnvironment, "write failed: " + path};
}

int cmd_run(const std::string& scenario, const std::string& out) {
  const auto s = load(scenario);
  with_output(out, [&](std::ostream& os) { sa::write_records(os, s); });
  return kOk;
}

int cmd_project(const std::string& scenario, const std::string& out) {
  const auto s = load(scenario);
  if (s.cameras.empty()) throw Failure{kInvalid, scenario + ": scenario has no cameras"};
  with_output(out, [&](std::ostream& os) {
    for (const auto& p : sa::project_scenario(s)) os << sa::canonical(sa::to_json(p)) << '\n';
  });
  return kOk;
}

int cmd_replay(const std::string& records) {
  if (!std::filesystem::is_regular_file(records)) throw Failure{kEnvironment, "no such record file: " + records};
  const auto report = sa::replay_file(records);
  std::cout << report.summary() << '\n';
  return report.ok() ? kOk : kInvalid;
}

sa::Server* g_server = nullptr;

extern "C" void on_signal(int) {
  if (g_server) g_server->stop();
}

struct ServeArgs {
  std::string scenario;
  std::optional<std::string> host;
  std::optional<std::uint16_t> hub_port;
  std::uint16_t ui_port = sa::kDefaultUiPort;
  std::string assets;
  std::string record;
  double duration = 0.0;
  bool no_c2_focus = false;
};

int cmd_serve(const ServeArgs& a) {
  auto s = load(a.scenario);
  sa::ServeOptions opt;
  if (const char* env = std::getenv("SA_HUB_ADDR"); env && *env) {
    try {
      const auto addr = sa::parse_hub_addr(env);
      opt.host = addr.host;
      opt.hub_port = addr.port;
    } catch (const std::invalid_argument& e) {
      throw Failure{kEnvironment, std::string("SA_HUB_ADDR: ") + e.what()};
    }
  }
  if (a.host) opt.host = *a.host;
  if (a.hub_port) opt.hub_port = *a.hub_port;
  opt.ui_port = a.ui_port;
  if (!a.assets.empty()) {
    if (!std::filesystem::is_directory(a.assets)) throw Failure{kEnvironment, "no such assets directory: " + a.assets};
    opt.assets = a.assets;
  }
  opt.duration = a.duration;
  opt.c2_may_edit_foci = !a.no_c2_focus;

  sa::Server server(std::move(s), opt);
  try {
    server.start();
  } catch (const sa::EnvironmentError& e) {
    throw Failure{kEnvironment, e.what()};
  }
  std::cout << "listening hub=" << opt.host << ':' << server.hub_port() << " ui=" << opt.host << ':'
            << server.ui_port() << std::endl;
  g_server = &server;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  server.run();
  g_server = nullptr;
  if (!a.record.empty()) {
    try {
      server.write_record(a.record);
    } catch (const sa::EnvironmentError& e) {
      throw Failure{kEnvironment, e.what()};
    }
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Situational awareness engine: filter, occlusion directives, C2 projection, hub."};
  app.require_subcommand(1);

  std::string scenario, out, records;
  auto* run = app.add_subcommand("run", "run a scenario headless and write its record stream");
  run->add_option("scenario", scenario, "scenario file")->required();
  run->add_option("-o,--output", out, "record file (default: stdout)");

  auto* project = app.add_subcommand("project", "compute texture placements for the scenario cameras");
  project->add_option("scenario", scenario, "scenario file")->required();
  project->add_option("-o,--output", out, "placement file (default: stdout)");

  auto* replay = app.add_subcommand("replay", "re-run a record file and compare it byte for byte");
  replay->add_option("records", records, "record file")->required();

  ServeArgs serve_args;
  auto* serve = app.add_subcommand("serve", "run a live session with hub and console endpoints");
  serve->add_option("scenario", serve_args.scenario, "scenario file")->required();
  serve->add_option("--host", serve_args.host, "listen address (overrides SA_HUB_ADDR)");
  serve->add_option("--hub-port", serve_args.hub_port, "federate endpoint port (overrides SA_HUB_ADDR)");
  serve->add_option("--ui-port", serve_args.ui_port, "console websocket and static file port")
      ->capture_default_str();
  serve->add_option("--assets", serve_args.assets, "directory of console files served over HTTP");
  serve->add_option("--record", serve_args.record, "write the session's record stream here on exit");
  serve->add_option("--duration", serve_args.duration, "stop after this many seconds (0: run until signalled)");
  serve->add_flag("--no-c2-focus-edits", serve_args.no_c2_focus, "ignore focus edits from C2 federates");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kInvalid;
  }

  try {
    if (*run) return cmd_run(scenario, out);
    if (*project) return cmd_project(scenario, out);
    if (*replay) return cmd_replay(records);
    if (*serve) return cmd_serve(serve_args);
  } catch (const Failure& f) {
    std::cerr << "sa: " << f.message << '\n';
    return f.code;
  } catch (const sa::ScenarioError& e) {
    std::cerr << e.what() << '\n';
    return kInvalid;
  } catch (const sa::RecordFileError& e) {
    std::cerr << "sa: corrupted record file: " << e.what() << '\n';
    return kInvalid;
  } catch (const std::exception& e) {
    std::cerr << "sa: " << e.what() << '\n';
    return kEnvironment;
  }
  return kInvalid;
}
