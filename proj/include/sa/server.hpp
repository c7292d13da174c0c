// Live session: framed TCP endpoint for federates, websocket endpoint (plus
// static files) for the console, and the engine federate that owns the
// scenario user and publishes its decisions.
#pragma once

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include <chrono>
#include <cmath>
#include <deque>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sa/hub.hpp"
#include "sa/protocol.hpp"
#include "sa/runner.hpp"
#include "sa/scenario.hpp"

namespace sa {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;

/// Failure outside the caller's input: ports, files, sockets.
class EnvironmentError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint16_t kDefaultHubPort = 7411;
inline constexpr std::uint16_t kDefaultUiPort = 7412;

struct HubAddress {
  std::string host = "127.0.0.1";
  std::uint16_t port = kDefaultHubPort;
};

/// "host:port", "host" or ":port".
inline HubAddress parse_hub_addr(const std::string& s) {
  HubAddress a;
  const auto colon = s.rfind(':');
  const std::string host = colon == std::string::npos ? s : s.substr(0, colon);
  if (!host.empty()) a.host = host;
  if (colon != std::string::npos) {
    const std::string port = s.substr(colon + 1);
    std::size_t used = 0;
    unsigned long v = 0;
    try {
      v = std::stoul(port, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != port.size() || port.empty() || v > 65535) throw std::invalid_argument("bad port in '" + s + "'");
    a.port = static_cast<std::uint16_t>(v);
  }
  return a;
}

struct ServeOptions {
  std::string host = "127.0.0.1";
  std::uint16_t hub_port = kDefaultHubPort;  // 0 picks a free port
  std::uint16_t ui_port = kDefaultUiPort;
  std::optional<std::filesystem::path> assets;
  double duration = 0.0;  // seconds; 0 runs until stopped
  int cycle_ms = 20;
  bool c2_may_edit_foci = true;
  std::string engine_id = "engine";
  std::ostream* log = &std::cerr;
};

class Server;

class Peer : public std::enable_shared_from_this<Peer> {
 public:
  virtual ~Peer() = default;
  virtual void send(const Message& m) = 0;
  virtual void close() = 0;

  FederateId id;
};

namespace detail {

class TcpPeer;
class WsPeer;
class HttpSession;

}  // namespace detail

class Server {
 public:
  Server(Scenario scenario, ServeOptions opt)
      : scenario_(std::move(scenario)),
        opt_(std::move(opt)),
        hub_(scenario_.classes),
        engine_(scenario_),
        fed_(opt_.engine_id, FederateKind::mobile, scenario_.classes),
        trigger_(engine_.focus(), engine_.zone()),
        hub_acceptor_(io_),
        ui_acceptor_(io_),
        timer_(io_) {}

  /// Binds both endpoints and seeds the hub. Throws EnvironmentError.
  void start() {
    bind(hub_acceptor_, opt_.hub_port, "hub");
    bind(ui_acceptor_, opt_.ui_port, "ui");
    t0_ = std::chrono::steady_clock::now();
    seed_hub();
    accept_hub();
    accept_ui();
    tick();
  }

  /// Runs the session on the calling thread until stop() or the duration.
  void run() { io_.run(); }

  /// Thread-safe.
  void stop() {
    asio::post(io_, [this] { shutdown(); });
  }

  std::uint16_t hub_port() const { return hub_acceptor_.local_endpoint().port(); }
  std::uint16_t ui_port() const { return ui_acceptor_.local_endpoint().port(); }
  asio::io_context& io() { return io_; }

  /// The scenario plus every live input received, as a scenario document
  /// whose run reproduces the session.
  json recorded_scenario() const {
    json doc = scenario_.source;
    std::vector<std::pair<double, json>> events;
    if (doc.contains("events") && doc["events"].is_array()) {
      for (const auto& e : doc["events"]) events.emplace_back(e["t"].get<double>(), e);
    }
    for (const auto& e : live_) events.emplace_back(e["t"].get<double>(), e);
    std::stable_sort(events.begin(), events.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    json out = json::array();
    for (auto& [_, e] : events) out.push_back(std::move(e));
    doc["events"] = std::move(out);
    return doc;
  }

  void write_record(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw EnvironmentError("cannot write " + path);
    write_records(os, build_scenario(recorded_scenario(), "<session>"));
    if (!os) throw EnvironmentError("write failed: " + path);
  }

  const Hub& hub() const { return hub_; }
  const std::vector<std::string>& errors() const { return errors_; }

  // Called by connections on the io thread.

  void on_message(const std::shared_ptr<Peer>& peer, const Message& m) {
    if (peer->id.empty()) {
      if (m.type == MsgType::join && m.sender != fed_.id()) {
        peer->id = m.sender;
        if (auto it = peers_.find(m.sender); it != peers_.end() && it->second != peer) it->second->close();
        peers_[m.sender] = peer;
      }
    } else if (m.sender != peer->id) {
      note("connection of " + peer->id + " sent as " + m.sender);
      peer->close();
      return;
    }
    route(m, peer.get());
  }

  void on_closed(const std::shared_ptr<Peer>& peer) {
    if (peer->id.empty()) return;
    auto it = peers_.find(peer->id);
    if (it != peers_.end() && it->second == peer) {
      peers_.erase(it);
      hub_.leave(peer->id);
    }
  }

  void note(const std::string& what) {
    errors_.push_back(what);
    if (opt_.log) *opt_.log << "sa serve: " << what << '\n';
  }

  /// Static file under the assets directory, or nothing.
  std::optional<std::string> asset(std::string target, std::string& content_type) const {
    if (!opt_.assets) return std::nullopt;
    if (auto q = target.find('?'); q != std::string::npos) target.erase(q);
    if (target.empty() || target == "/") target = "/index.html";
    if (target.find("..") != std::string::npos || target.front() != '/') return std::nullopt;
    const auto path = *opt_.assets / target.substr(1);
    std::ifstream in(path, std::ios::binary);
    if (!in) return std::nullopt;
    static const std::map<std::string, std::string> kTypes{
        {".html", "text/html"}, {".js", "text/javascript"}, {".css", "text/css"},
        {".json", "application/json"}, {".svg", "image/svg+xml"}, {".png", "image/png"}};
    auto it = kTypes.find(path.extension().string());
    content_type = it == kTypes.end() ? "application/octet-stream" : it->second;
    return std::string(std::istreambuf_iterator<char>(in), {});
  }

 private:
  void bind(tcp::acceptor& acc, std::uint16_t port, const char* what) {
    beast::error_code ec;
    const auto addr = asio::ip::make_address(opt_.host, ec);
    if (ec) throw EnvironmentError(std::string("bad host '") + opt_.host + "'");
    const tcp::endpoint ep(addr, port);
    acc.open(ep.protocol(), ec);
    if (!ec) acc.set_option(asio::socket_base::reuse_address(true), ec);
    if (!ec) acc.bind(ep, ec);
    if (!ec) acc.listen(asio::socket_base::max_listen_connections, ec);
    if (ec) {
      throw EnvironmentError(std::string("cannot listen on ") + opt_.host + ":" + std::to_string(port) + " (" +
                             what + " endpoint): " + ec.message());
    }
  }

  void accept_hub();
  void accept_ui();

  double clock() const {
    const std::chrono::duration<double> d = std::chrono::steady_clock::now() - t0_;
    return std::round(d.count() * 1000.0) / 1000.0;
  }

  void route(const Message& m, Peer* from) {
    HubOutcome out = hub_.handle(m);
    if (out.error) note(*out.error);
    for (const auto& d : out.deliveries) {
      if (d.to == fed_.id()) {
        engine_receive(d.message);
      } else if (auto it = peers_.find(d.to); it != peers_.end()) {
        it->second->send(d.message);
      }
    }
    if (out.close_sender && from) from->close();
  }

  void publish(MsgType type, json payload) {
    try {
      route(fed_.publish(type, std::move(payload)), nullptr);
    } catch (const MalformedPayload& e) {
      note(std::string("engine could not publish ") + std::string(to_string(type)) + ": " + e.what());
    }
  }

  std::uint64_t next_version(const char* kind, const std::string& id) const {
    const auto& store = fed_.replica().objects(kind);
    auto it = store.find(id);
    return it == store.end() ? 1 : it->second.stamp.version + 1;
  }

  void publish_object(MsgType type, const char* kind, const std::string& id, json value) {
    publish(type, object_payload(type, id, next_version(kind, id), fed_.id(), std::move(value)));
  }

  void publish_focus() { publish_object(MsgType::focus_update, "foci", engine_.user_id(), to_json(engine_.focus())); }

  void publish_zone() {
    if (auto z = engine_.zone()) publish_object(MsgType::zone_update, "zones", "active", to_json(*z));
  }

  void publish_entity(const EntityId& id) {
    if (const Entity* e = engine_.db().find(id)) {
      publish(MsgType::entity_update, entity_update_payload(*e));
    } else if (auto s = engine_.db().stamp_of(id)) {
      publish(MsgType::entity_remove, entity_remove_payload(id, s->version, s->owner));
    }
  }

  void publish_camera(const CameraSpec& c) {
    publish_object(MsgType::camera_meta, "cameras", c.id, to_json(c.pose));
  }

  void seed_hub() {
    route(fed_.join(), nullptr);
    for (const auto& e : engine_.db().snapshot()) publish(MsgType::entity_update, entity_update_payload(e));
    for (const auto& [id, r] : engine_.routes()) publish_object(MsgType::route_update, "routes", id, to_json(r));
    publish_zone();
    publish_focus();
    for (const auto& [_, c] : engine_.cameras()) publish_camera(c);
    trigger_.db_mutated();
  }

  /// Scripted inputs are re-published so that the hub holds the truth.
  void apply_scripted(const ScenarioEvent& ev) {
    engine_.apply(ev);
    if (ev.kind == "entity") {
      publish_entity(ev.body["id"].get<std::string>());
    } else if (ev.kind == "remove") {
      publish_entity(ev.body.get<std::string>());
    } else if (ev.kind == "route") {
      const auto id = ev.body["id"].get<std::string>();
      publish_object(MsgType::route_update, "routes", id, to_json(engine_.routes().at(id)));
      publish_zone();
    } else if (ev.kind == "zone") {
      publish_zone();
    } else if (ev.kind == "focus" || ev.kind == "pose") {
      publish_focus();
    } else if (ev.kind == "camera") {
      publish_camera(engine_.cameras().at(ev.body["id"].get<std::string>()));
    }
  }

  void engine_receive(const Message& m) {
    try {
      fed_.receive(m);
    } catch (const MalformedPayload& e) {
      note("engine rejected " + std::string(to_string(m.type)) + ": " + e.what());
      return;
    }
    const double t = clock();
    ScenarioEvent ev{t, {}, {}};
    const json& p = m.payload;
    switch (m.type) {
      case MsgType::entity_update:
        ev = {t, "entity", p};
        break;
      case MsgType::entity_remove:
        if (!engine_.db().find(p["id"].get<std::string>())) return;
        ev = {t, "remove", p["id"]};
        break;
      case MsgType::zone_update:
        ev = {t, "zone", p["zone"]};
        break;
      case MsgType::route_update:
        ev = {t, "route", p["route"]};
        break;
      case MsgType::focus_update: {
        if (p["id"] != engine_.user_id()) return;
        const auto member = hub_.members().find(m.sender);
        if (member != hub_.members().end() && member->second.kind == FederateKind::c2 && !opt_.c2_may_edit_foci) {
          note("focus edit from C2 federate " + m.sender + " ignored");
          return;
        }
        const json& f = p["focus"];
        ev = {t, "focus", {{"weapon_range", f["weapon_range"]},
                           {"awareness_range", f["awareness_range"]},
                           {"time_window", f["time_window"]}}};
        break;
      }
      case MsgType::camera_meta: {
        json body = p["camera"];
        body["id"] = p["id"];
        body["timestamp"] = t;
        ev = {t, "camera", std::move(body)};
        break;
      }
      default:
        return;
    }
    try {
      engine_.apply(ev);
    } catch (const std::exception& e) {
      note("engine could not apply " + std::string(to_string(m.type)) + ": " + e.what());
      return;
    }
    live_.push_back({{"t", ev.t}, {ev.kind, ev.body}});
    trigger_.db_mutated();
  }

  void tick() {
    const double t = clock();
    while (next_pose_ < scenario_.poses.size() && scenario_.poses[next_pose_].t <= t) {
      engine_.apply_pose(scenario_.poses[next_pose_++]);
      trigger_.pose_changed(engine_.pose().position);
      publish_focus();
    }
    while (next_event_ < scenario_.events.size() && scenario_.events[next_event_].t <= t) {
      try {
        apply_scripted(scenario_.events[next_event_]);
      } catch (const std::exception& e) {
        note(std::string("scripted event failed: ") + e.what());
      }
      ++next_event_;
      trigger_.db_mutated();
    }
    if (trigger_.take()) {
      publish_object(MsgType::decisions, "decisions", engine_.user_id(), to_json(engine_.decide(t)));
    }
    if (opt_.duration > 0.0 && t >= opt_.duration) {
      shutdown();
      return;
    }
    timer_.expires_after(std::chrono::milliseconds(opt_.cycle_ms));
    timer_.async_wait([this](const beast::error_code& ec) {
      if (!ec && !stopping_) tick();
    });
  }

  void shutdown() {
    if (stopping_) return;
    stopping_ = true;
    beast::error_code ec;
    hub_acceptor_.close(ec);
    ui_acceptor_.close(ec);
    timer_.cancel();
    auto peers = peers_;
    for (auto& [_, p] : peers) p->close();
    io_.stop();
  }

  Scenario scenario_;
  ServeOptions opt_;
  Hub hub_;
  Engine engine_;
  Federate fed_;
  RecomputeTrigger trigger_;
  asio::io_context io_;
  tcp::acceptor hub_acceptor_;
  tcp::acceptor ui_acceptor_;
  asio::steady_timer timer_;
  std::map<FederateId, std::shared_ptr<Peer>> peers_;
  std::vector<json> live_;
  std::vector<std::string> errors_;
  std::chrono::steady_clock::time_point t0_;
  std::size_t next_pose_ = 1;
  std::size_t next_event_ = 0;
  bool stopping_ = false;
};

namespace detail {

/// Federate over a byte stream of length-prefixed frames.
class TcpPeer : public Peer {
 public:
  TcpPeer(tcp::socket socket, Server& server) : socket_(std::move(socket)), server_(server) {}

  void start() { read(); }

  void send(const Message& m) override {
    if (closed_) return;
    out_.push_back(frame_encode(m));
    if (out_.size() == 1) write();
  }

  void close() override {
    if (closed_) return;
    closed_ = true;
    beast::error_code ec;
    socket_.shutdown(tcp::socket::shutdown_both, ec);
    socket_.close(ec);
  }

 private:
  void read() {
    auto self = std::static_pointer_cast<TcpPeer>(shared_from_this());
    socket_.async_read_some(asio::buffer(buf_), [self](const beast::error_code& ec, std::size_t n) {
      if (ec) return self->finish();
      self->decoder_.feed({self->buf_.data(), n});
      for (;;) {
        const std::size_t before = self->decoder_.buffered();
        try {
          auto m = self->decoder_.next();
          if (!m) break;
          self->server_.on_message(self, *m);
        } catch (const MalformedPayload& e) {
          self->server_.note("dropped frame from " + (self->id.empty() ? "unjoined peer" : self->id) + ": " + e.what());
          if (self->decoder_.buffered() == before) {
            self->close();  // framing itself is broken
          }
        }
        if (self->closed_) return self->finish();
      }
      self->read();
    });
  }

  void write() {
    auto self = std::static_pointer_cast<TcpPeer>(shared_from_this());
    asio::async_write(socket_, asio::buffer(out_.front()), [self](const beast::error_code& ec, std::size_t) {
      if (ec) return self->finish();
      self->out_.pop_front();
      if (!self->out_.empty()) self->write();
    });
  }

  void finish() {
    if (finished_) return;
    finished_ = true;
    close();
    server_.on_closed(shared_from_this());
  }

  tcp::socket socket_;
  Server& server_;
  std::array<char, 8192> buf_{};
  FrameDecoder decoder_;
  std::deque<std::string> out_;
  bool closed_ = false;
  bool finished_ = false;
};

/// Console connection: one canonical JSON message per websocket text frame.
class WsPeer : public Peer {
 public:
  WsPeer(tcp::socket socket, Server& server) : ws_(std::move(socket)), server_(server) {}

  void start(http::request<http::string_body> req) {
    auto self = std::static_pointer_cast<WsPeer>(shared_from_this());
    req_ = std::move(req);
    ws_.text(true);
    ws_.async_accept(req_, [self](const beast::error_code& ec) {
      if (ec) return self->finish();
      self->read();
    });
  }

  void send(const Message& m) override {
    if (closed_) return;
    out_.push_back(canonical(to_json(m)));
    if (out_.size() == 1) write();
  }

  void close() override {
    if (closed_) return;
    closed_ = true;
    beast::error_code ec;
    beast::get_lowest_layer(ws_).shutdown(tcp::socket::shutdown_both, ec);
    beast::get_lowest_layer(ws_).close(ec);
  }

 private:
  void read() {
    auto self = std::static_pointer_cast<WsPeer>(shared_from_this());
    ws_.async_read(buf_, [self](const beast::error_code& ec, std::size_t) {
      if (ec) return self->finish();
      const std::string body = beast::buffers_to_string(self->buf_.data());
      self->buf_.consume(self->buf_.size());
      try {
        self->server_.on_message(self, decode_body(body));
      } catch (const MalformedPayload& e) {
        self->server_.note("dropped console message: " + std::string(e.what()));
      }
      if (self->closed_) return self->finish();
      self->read();
    });
  }

  void write() {
    auto self = std::static_pointer_cast<WsPeer>(shared_from_this());
    ws_.async_write(asio::buffer(out_.front()), [self](const beast::error_code& ec, std::size_t) {
      if (ec) return self->finish();
      self->out_.pop_front();
      if (!self->out_.empty()) self->write();
    });
  }

  void finish() {
    if (finished_) return;
    finished_ = true;
    close();
    server_.on_closed(shared_from_this());
  }

  websocket::stream<tcp::socket> ws_;
  Server& server_;
  http::request<http::string_body> req_;
  beast::flat_buffer buf_;
  std::deque<std::string> out_;
  bool closed_ = false;
  bool finished_ = false;
};

/// First request on the console port: websocket upgrade or a static file.
class HttpSession : public std::enable_shared_from_this<HttpSession> {
 public:
  HttpSession(tcp::socket socket, Server& server) : socket_(std::move(socket)), server_(server) {}

  void start() {
    auto self = shared_from_this();
    http::async_read(socket_, buf_, req_, [self](const beast::error_code& ec, std::size_t) {
      if (ec) return;
      if (websocket::is_upgrade(self->req_)) {
        auto peer = std::make_shared<WsPeer>(std::move(self->socket_), self->server_);
        peer->start(std::move(self->req_));
        return;
      }
      self->respond();
    });
  }

 private:
  void respond() {
    auto res = std::make_shared<http::response<http::string_body>>();
    res->version(req_.version());
    res->keep_alive(false);
    std::string type;
    std::optional<std::string> body;
    if (req_.method() == http::verb::get) body = server_.asset(std::string(req_.target()), type);
    if (body) {
      res->result(http::status::ok);
      res->set(http::field::content_type, type);
      res->body() = std::move(*body);
    } else {
      res->result(http::status::not_found);
      res->set(http::field::content_type, "text/plain");
      res->body() = "not found\n";
    }
    res->prepare_payload();
    auto self = shared_from_this();
    http::async_write(socket_, *res, [self, res](const beast::error_code&, std::size_t) {
      beast::error_code ec;
      self->socket_.shutdown(tcp::socket::shutdown_send, ec);
    });
  }

  tcp::socket socket_;
  Server& server_;
  beast::flat_buffer buf_;
  http::request<http::string_body> req_;
};

}  // namespace detail

inline void Server::accept_hub() {
  hub_acceptor_.async_accept([this](const beast::error_code& ec, tcp::socket socket) {
    if (stopping_) return;
    if (!ec) std::make_shared<detail::TcpPeer>(std::move(socket), *this)->start();
    accept_hub();
  });
}

inline void Server::accept_ui() {
  ui_acceptor_.async_accept([this](const beast::error_code& ec, tcp::socket socket) {
    if (stopping_) return;
    if (!ec) std::make_shared<detail::HttpSession>(std::move(socket), *this)->start();
    accept_ui();
  });
}

}  // namespace sa
