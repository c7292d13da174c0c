#include <gtest/gtest.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <thread>

#include "sa/server.hpp"
#include "support/net_client.hpp"

namespace {

using namespace std::chrono_literals;
using testing_support::FrameClient;
using testing_support::WsClient;

std::string source_dir() {
  const char* d = std::getenv("SA_SOURCE_DIR");
  return d ? d : ".";
}

sa::Scenario patrol() { return sa::load_scenario(source_dir() + "/scenarios/patrol_corridor.yaml"); }

class LiveSession : public ::testing::Test {
 protected:
  void start(sa::Scenario s, sa::ServeOptions opt = {}) {
    opt.hub_port = 0;
    opt.ui_port = 0;
    opt.log = nullptr;
    opt.cycle_ms = 10;
    classes_ = s.classes;
    server_ = std::make_unique<sa::Server>(std::move(s), opt);
    server_->start();
    thread_ = std::thread([this] { server_->run(); });
  }

  void stop() {
    if (!server_ || !thread_.joinable()) return;
    server_->stop();
    thread_.join();
  }

  void TearDown() override { stop(); }

  /// Feeds everything that arrives into `f` until the line is quiet.
  template <typename Client>
  std::vector<sa::Message> drain(Client& c, sa::Federate& f, std::chrono::milliseconds quiet = 250ms) {
    std::vector<sa::Message> out;
    while (auto m = c.receive(quiet)) {
      f.receive(*m);
      out.push_back(*m);
    }
    return out;
  }

  std::unique_ptr<sa::Server> server_;
  std::thread thread_;
  std::vector<sa::EntityClass> classes_;
};

TEST_F(LiveSession, JoinGetsWelcomeThenSnapshot) {
  start(patrol());
  FrameClient c;
  ASSERT_TRUE(c.connect(server_->hub_port()));
  sa::Federate f("mob-1", sa::FederateKind::mobile, classes_);
  c.send(f.join());
  auto welcome = c.receive();
  ASSERT_TRUE(welcome);
  EXPECT_EQ(welcome->type, sa::MsgType::welcome);
  EXPECT_EQ(welcome->payload["federate"], "mob-1");
  auto snap = c.receive();
  ASSERT_TRUE(snap);
  ASSERT_EQ(snap->type, sa::MsgType::snapshot);
  f.receive(*snap);
  EXPECT_EQ(f.replica().db().size(), 33u);
  EXPECT_TRUE(f.replica().objects("routes").contains("patrol"));
  EXPECT_TRUE(f.replica().objects("foci").contains("patrol-lead"));
}

TEST_F(LiveSession, FocusFromConsoleBringsNewDecisions) {
  start(patrol());
  WsClient ws;
  ASSERT_TRUE(ws.connect(server_->ui_port()));
  sa::Federate ui("console-1", sa::FederateKind::ui, classes_);
  ws.send(ui.join());
  drain(ws, ui);
  const auto& before = ui.replica().objects("decisions").at("patrol-lead").value;
  std::size_t shown_before = 0;
  for (const auto& [_, v] : before["decisions"].items()) shown_before += v["state"] == "show";

  const auto version = ui.replica().objects("foci").at("patrol-lead").stamp.version + 1;
  sa::FocusSet narrow;
  const auto t0 = std::chrono::steady_clock::now();
  ws.send(ui.publish(sa::MsgType::focus_update,
                     sa::object_payload(sa::MsgType::focus_update, "patrol-lead", version, "console-1",
                                        sa::to_json(narrow))));
  std::optional<sa::json> decisions;
  while (auto m = ws.receive(1000ms)) {
    ui.receive(*m);
    if (m->type == sa::MsgType::decisions && m->payload["decisions"]["focus"]["awareness_range"] == 0.0) {
      decisions = m->payload["decisions"];
      break;
    }
  }
  const auto elapsed = std::chrono::steady_clock::now() - t0;
  ASSERT_TRUE(decisions) << "no DECISIONS after the focus change";
  EXPECT_LT(elapsed, 500ms);
  std::size_t shown = 0;
  for (const auto& [id, v] : (*decisions)["decisions"].items()) {
    shown += v["state"] == "show";
    if (id == "ied-1" || id == "ep-1") EXPECT_EQ(v["state"], "show") << id;
  }
  EXPECT_LT(shown, shown_before);
}

TEST_F(LiveSession, RestartedFederateConvergesAfterRejoin) {
  start(patrol());
  sa::Federate a("mob-a", sa::FederateKind::mobile, classes_);
  sa::Federate b("c2-b", sa::FederateKind::c2, classes_);
  auto ca = std::make_unique<FrameClient>();
  FrameClient cb;
  ASSERT_TRUE(ca->connect(server_->hub_port()));
  ASSERT_TRUE(cb.connect(server_->hub_port()));
  ca->send(a.join());
  cb.send(b.join());
  drain(*ca, a);
  drain(cb, b);

  auto update = [&](sa::Federate& f, const std::string& id, double x) {
    sa::Entity e;
    e.id = id;
    e.class_name = "friendly";
    e.position = {x, 10, 0};
    const auto s = f.replica().db().stamp_of(id);
    e.version = s ? s->version + 1 : 1;
    e.owner = f.id();
    return f.publish(sa::MsgType::entity_update, sa::entity_update_payload(e));
  };
  for (int i = 0; i < 5; ++i) ca->send(update(a, "a" + std::to_string(i), 10.0 * i));
  drain(*ca, a);
  drain(cb, b);

  ca->close();
  ca.reset();
  for (int i = 0; i < 5; ++i) cb.send(update(b, "a" + std::to_string(i), 500.0 + i));
  cb.send(b.publish(sa::MsgType::entity_remove, sa::entity_remove_payload("sq-1", 2, "c2-b")));
  std::vector<sa::Message> outbox;
  for (int i = 0; i < 3; ++i) outbox.push_back(update(a, "offline" + std::to_string(i), 1.0 * i));
  drain(cb, b);

  FrameClient again;
  ASSERT_TRUE(again.connect(server_->hub_port()));
  again.send(a.join());
  for (auto& m : outbox) again.send(a.make(m.type, m.payload));
  drain(again, a);
  drain(cb, b);

  EXPECT_EQ(a.replica().hash(), b.replica().hash());
  EXPECT_EQ(a.replica().db().find("a0")->position.x, 500.0);
  EXPECT_NE(b.replica().db().find("offline2"), nullptr);
  EXPECT_EQ(b.replica().db().find("sq-1"), nullptr);
  stop();
  EXPECT_EQ(server_->hub().replica().hash(), a.replica().hash());
}

TEST_F(LiveSession, BadFrameIsDroppedAndConnectionKept) {
  start(patrol());
  FrameClient c;
  ASSERT_TRUE(c.connect(server_->hub_port()));
  sa::Federate f("mob-1", sa::FederateKind::mobile, classes_);
  c.send(f.join());
  drain(c, f);
  c.send_raw(sa::frame_bytes("{not json"));
  c.send(f.make(sa::MsgType::snapshot_req, {}));
  std::optional<sa::Message> snap;
  while (auto m = c.receive()) {
    if (m->type == sa::MsgType::snapshot) {
      snap = m;
      break;
    }
  }
  EXPECT_TRUE(snap);
  EXPECT_FALSE(c.closed());
}

TEST_F(LiveSession, FirstMessageMustBeJoin) {
  start(patrol());
  FrameClient c;
  ASSERT_TRUE(c.connect(server_->hub_port()));
  sa::Federate f("stranger", sa::FederateKind::mobile, classes_);
  c.send(f.make(sa::MsgType::heartbeat, {}));
  EXPECT_FALSE(c.receive(1000ms));
  EXPECT_TRUE(c.closed());
}

TEST_F(LiveSession, ScriptedEventsPlayOnTheSessionClock) {
  auto text = std::string(R"(
classes:
  - {name: friendly, impact_radius: 5, symbol: SFGPU-----}
entities:
  - {id: a, class: friendly, position: [10, 0, 0]}
zone:
  polygon: [[0, -20], [40, -20], [40, 20], [0, 20]]
user:
  id: u
  poses:
    - {t: 0, position: [0, 0]}
focus: {weapon_range: 10, awareness_range: 100}
events:
  - {t: 0.2, entity: {id: late, class: friendly, position: [20, 0, 0]}}
)");
  start(sa::load_scenario_text(text));
  FrameClient c;
  ASSERT_TRUE(c.connect(server_->hub_port()));
  sa::Federate f("mob-1", sa::FederateKind::mobile, classes_);
  c.send(f.join());
  bool saw_entity = false, saw_decision = false;
  const auto deadline = std::chrono::steady_clock::now() + 3s;
  while (!(saw_entity && saw_decision) && std::chrono::steady_clock::now() < deadline) {
    auto m = c.receive(500ms);
    if (!m) continue;
    f.receive(*m);
    if (m->type == sa::MsgType::entity_update && m->payload["id"] == "late") saw_entity = true;
    if (saw_entity && m->type == sa::MsgType::decisions &&
        m->payload["decisions"]["decisions"].contains("late")) {
      saw_decision = true;
    }
  }
  EXPECT_TRUE(saw_entity);
  EXPECT_TRUE(saw_decision);
}

TEST_F(LiveSession, SessionRecordReplays) {
  start(patrol());
  WsClient ws;
  ASSERT_TRUE(ws.connect(server_->ui_port()));
  sa::Federate ui("console-1", sa::FederateKind::ui, classes_);
  ws.send(ui.join());
  drain(ws, ui);
  sa::Entity e;
  e.id = "marked";
  e.class_name = "hostile";
  e.position = {120, 30, 0};
  e.owner = "console-1";
  ws.send(ui.publish(sa::MsgType::entity_update, sa::entity_update_payload(e)));
  sa::FocusSet f;
  f.awareness_range = 120;
  ws.send(ui.publish(sa::MsgType::focus_update,
                     sa::object_payload(sa::MsgType::focus_update, "patrol-lead", 10, "console-1", sa::to_json(f))));
  drain(ws, ui);
  stop();

  const auto doc = server_->recorded_scenario();
  std::set<std::string> kinds;
  for (const auto& ev : doc["events"]) {
    for (const auto& [k, _] : ev.items()) {
      if (k != "t") kinds.insert(k);
    }
  }
  EXPECT_TRUE(kinds.contains("entity"));
  EXPECT_TRUE(kinds.contains("focus"));
  const auto path = std::filesystem::temp_directory_path() / "sa_session_record.ndjson";
  server_->write_record(path.string());
  const auto report = sa::replay_file(path.string());
  EXPECT_TRUE(report.ok()) << report.summary();
  EXPECT_GE(report.records, 2u);
  std::filesystem::remove(path);
}

TEST_F(LiveSession, C2FocusEditsCanBeDisabled) {
  sa::ServeOptions opt;
  opt.c2_may_edit_foci = false;
  start(patrol(), opt);
  FrameClient c;
  ASSERT_TRUE(c.connect(server_->hub_port()));
  sa::Federate c2("c2-1", sa::FederateKind::c2, classes_);
  c.send(c2.join());
  drain(c, c2);
  sa::FocusSet narrow;
  c.send(c2.publish(sa::MsgType::focus_update,
                    sa::object_payload(sa::MsgType::focus_update, "patrol-lead", 10, "c2-1", sa::to_json(narrow))));
  drain(c, c2);
  stop();
  EXPECT_TRUE(server_->recorded_scenario()["events"].empty());
  bool noted = false;
  for (const auto& e : server_->errors()) noted |= e.find("ignored") != std::string::npos;
  EXPECT_TRUE(noted);
}

TEST_F(LiveSession, ServesStaticAssets) {
  const auto dir = std::filesystem::temp_directory_path() / "sa_assets_test";
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "index.html") << "<!doctype html><title>console</title>";
  sa::ServeOptions opt;
  opt.assets = dir;
  start(patrol(), opt);
  auto r = testing_support::http_get(server_->ui_port(), "/");
  EXPECT_EQ(r.status, 200);
  EXPECT_NE(r.body.find("console"), std::string::npos);
  EXPECT_EQ(testing_support::http_get(server_->ui_port(), "/missing.js").status, 404);
  EXPECT_EQ(testing_support::http_get(server_->ui_port(), "/../etc/passwd").status, 404);
  std::filesystem::remove_all(dir);
}

TEST(ServeConfig, PortInUseIsEnvironmentError) {
  boost::asio::io_context io;
  sa::tcp::acceptor busy(io, {boost::asio::ip::make_address("127.0.0.1"), 0});
  sa::ServeOptions opt;
  opt.hub_port = busy.local_endpoint().port();
  opt.ui_port = 0;
  opt.log = nullptr;
  sa::Server server(patrol(), opt);
  EXPECT_THROW(server.start(), sa::EnvironmentError);
}

TEST(ServeConfig, HubAddressParsing) {
  auto a = sa::parse_hub_addr("10.0.0.5:9000");
  EXPECT_EQ(a.host, "10.0.0.5");
  EXPECT_EQ(a.port, 9000);
  a = sa::parse_hub_addr(":7500");
  EXPECT_EQ(a.host, "127.0.0.1");
  EXPECT_EQ(a.port, 7500);
  a = sa::parse_hub_addr("0.0.0.0");
  EXPECT_EQ(a.port, sa::kDefaultHubPort);
  EXPECT_THROW(sa::parse_hub_addr("host:99999"), std::invalid_argument);
  EXPECT_THROW(sa::parse_hub_addr("host:x1"), std::invalid_argument);
}

}  // namespace
