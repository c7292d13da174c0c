// Wire messages, length-prefixed framing, and the replicated session state
// every federate (and the hub) keeps.
#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "sa/entity.hpp"
#include "sa/json_io.hpp"

namespace sa {

enum class MsgType {
  join,
  welcome,
  entity_update,
  entity_remove,
  zone_update,
  route_update,
  focus_update,
  camera_meta,
  decisions,
  snapshot_req,
  snapshot,
  heartbeat,
};

inline constexpr std::array<std::pair<MsgType, std::string_view>, 12> kMsgTypeNames{{
    {MsgType::join, "JOIN"},
    {MsgType::welcome, "WELCOME"},
    {MsgType::entity_update, "ENTITY_UPDATE"},
    {MsgType::entity_remove, "ENTITY_REMOVE"},
    {MsgType::zone_update, "ZONE_UPDATE"},
    {MsgType::route_update, "ROUTE_UPDATE"},
    {MsgType::focus_update, "FOCUS_UPDATE"},
    {MsgType::camera_meta, "CAMERA_META"},
    {MsgType::decisions, "DECISIONS"},
    {MsgType::snapshot_req, "SNAPSHOT_REQ"},
    {MsgType::snapshot, "SNAPSHOT"},
    {MsgType::heartbeat, "HEARTBEAT"},
}};

inline std::string_view to_string(MsgType t) {
  for (auto [type, name] : kMsgTypeNames) {
    if (type == t) return name;
  }
  return "?";
}

inline MsgType parse_msg_type(std::string_view name) {
  for (auto [type, n] : kMsgTypeNames) {
    if (n == name) return type;
  }
  throw MalformedPayload("unknown message type '" + std::string(name) + "'");
}

/// Types forwarded between federates. Everything else is session control.
inline const std::set<MsgType>& routable_types() {
  static const std::set<MsgType> types{MsgType::entity_update, MsgType::entity_remove,
                                       MsgType::zone_update,   MsgType::route_update,
                                       MsgType::focus_update,  MsgType::camera_meta,
                                       MsgType::decisions,     MsgType::heartbeat};
  return types;
}

struct Message {
  MsgType type = MsgType::heartbeat;
  FederateId sender;
  std::uint64_t seq = 0;
  json payload = json::object();

  friend bool operator==(const Message&, const Message&) = default;
};

inline json to_json(const Message& m) {
  return {{"type", to_string(m.type)}, {"sender", m.sender}, {"seq", m.seq}, {"payload", m.payload}};
}

inline Message parse_message(const json& j) {
  Message m;
  m.type = parse_msg_type(io::string(j, "type"));
  m.sender = io::string(j, "sender");
  m.seq = io::uint(j, "seq");
  m.payload = io::field(j, "payload");
  if (!m.payload.is_object()) throw MalformedPayload("payload: expected object");
  return m;
}

// ---------------------------------------------------------------------------
// Framing: 4-byte big-endian length, then canonical JSON.

inline constexpr std::size_t kMaxFramePayload = 16u * 1024u * 1024u;

inline std::string frame_bytes(std::string_view body) {
  if (body.size() > kMaxFramePayload) throw MalformedPayload("frame payload exceeds 16 MiB");
  const auto n = static_cast<std::uint32_t>(body.size());
  std::string out;
  out.reserve(4 + body.size());
  out.push_back(static_cast<char>((n >> 24) & 0xff));
  out.push_back(static_cast<char>((n >> 16) & 0xff));
  out.push_back(static_cast<char>((n >> 8) & 0xff));
  out.push_back(static_cast<char>(n & 0xff));
  out.append(body);
  return out;
}

inline std::string frame_encode(const Message& m) { return frame_bytes(canonical(to_json(m))); }

inline Message decode_body(std::string_view body) {
  json j;
  try {
    j = json::parse(body);
  } catch (const json::parse_error& e) {
    throw MalformedPayload(std::string("frame is not JSON: ") + e.what());
  }
  return parse_message(j);
}

/// Incremental decoder for a byte stream.
class FrameDecoder {
 public:
  void feed(std::string_view bytes) { buffer_.append(bytes); }

  std::optional<Message> next() {
    if (buffer_.size() < 4) return std::nullopt;
    std::uint32_t n = 0;
    for (int i = 0; i < 4; ++i) n = (n << 8) | static_cast<unsigned char>(buffer_[static_cast<std::size_t>(i)]);
    if (n > kMaxFramePayload) throw MalformedPayload("frame payload exceeds 16 MiB");
    if (buffer_.size() < 4 + static_cast<std::size_t>(n)) return std::nullopt;
    const std::string body = buffer_.substr(4, n);
    buffer_.erase(0, 4 + static_cast<std::size_t>(n));
    return decode_body(body);
  }

  std::size_t buffered() const { return buffer_.size(); }

 private:
  std::string buffer_;
};

inline Message frame_decode(std::string_view bytes) {
  FrameDecoder d;
  d.feed(bytes);
  auto m = d.next();
  if (!m || d.buffered() != 0) throw MalformedPayload("expected exactly one complete frame");
  return *m;
}

// ---------------------------------------------------------------------------
// Replicated state

enum class ApplyResult { applied, ignored, not_mutation };

inline const char* to_string(ApplyResult r) {
  switch (r) {
    case ApplyResult::applied: return "applied";
    case ApplyResult::ignored: return "ignored";
    case ApplyResult::not_mutation: return "not-mutation";
  }
  return "?";
}

struct Versioned {
  Stamp stamp;
  json value;
};

namespace detail {

struct ObjectKind {
  MsgType type;
  const char* kind;       // key of the store in the snapshot
  const char* value_key;  // payload field carrying the value
};

inline constexpr std::array<ObjectKind, 5> kObjectKinds{{
    {MsgType::zone_update, "zones", "zone"},
    {MsgType::route_update, "routes", "route"},
    {MsgType::focus_update, "foci", "focus"},
    {MsgType::camera_meta, "cameras", "camera"},
    {MsgType::decisions, "decisions", "decisions"},
}};

inline const ObjectKind* object_kind(MsgType t) {
  for (const auto& k : kObjectKinds) {
    if (k.type == t) return &k;
  }
  return nullptr;
}

// Parses the value to reject malformed payloads and returns its canonical
// re-serialization.
inline json normalize_value(MsgType t, const json& v) {
  switch (t) {
    case MsgType::zone_update: return to_json(parse_zone(v));
    case MsgType::route_update: return to_json(parse_route(v));
    case MsgType::focus_update: return to_json(parse_focus(v));
    case MsgType::camera_meta: return to_json(parse_camera(v));
    case MsgType::decisions: return to_json(parse_decisions(v));
    default: throw MalformedPayload("not an object message");
  }
}

}  // namespace detail

/// Entities plus last-writer-wins stores for zones, routes, foci, cameras and
/// published decisions.
class Replica {
 public:
  Replica() = default;
  explicit Replica(const std::vector<EntityClass>& classes) {
    for (const auto& c : classes) db_.add_class(c);
  }

  const EntityDatabase& db() const { return db_; }
  EntityDatabase& db() { return db_; }

  const std::map<std::string, Versioned>& objects(const std::string& kind) const {
    static const std::map<std::string, Versioned> empty;
    auto it = objects_.find(kind);
    return it == objects_.end() ? empty : it->second;
  }

  ApplyResult apply(MsgType type, const json& payload) {
    switch (type) {
      case MsgType::entity_update: {
        Entity e = parse_entity(payload);
        try {
          return db_.upsert(e) == MutationResult::applied ? ApplyResult::applied : ApplyResult::ignored;
        } catch (const UnknownClassError& err) {
          throw MalformedPayload(err.what());
        } catch (const std::invalid_argument& err) {
          throw MalformedPayload(err.what());
        }
      }
      case MsgType::entity_remove: {
        const auto r = db_.remove(io::string(payload, "id"), io::uint(payload, "version"),
                                  io::string(payload, "owner"));
        return r == MutationResult::applied ? ApplyResult::applied : ApplyResult::ignored;
      }
      default:
        break;
    }
    const auto* kind = detail::object_kind(type);
    if (!kind) return ApplyResult::not_mutation;
    const std::string id = io::string(payload, "id");
    const Stamp stamp{io::uint(payload, "version"), io::string(payload, "owner")};
    json value = detail::normalize_value(type, io::field(payload, kind->value_key));
    return put(kind->kind, id, stamp, std::move(value));
  }

  ApplyResult apply(const Message& m) { return apply(m.type, m.payload); }

  /// Full state in canonical form. Revision counters are local and excluded.
  json state() const {
    json classes = json::array();
    for (const auto& [_, c] : db_.classes()) classes.push_back(to_json(c));
    json entities = json::array();
    for (const auto& [_, e] : db_.entities()) entities.push_back(to_json(e));
    json tombstones = json::object();
    for (const auto& [id, s] : db_.tombstones()) tombstones[id] = to_json(s);
    json objects = json::object();
    for (const auto& k : detail::kObjectKinds) {
      json store = json::object();
      for (const auto& [id, v] : this->objects(k.kind)) {
        store[id] = {{"version", v.stamp.version}, {"owner", v.stamp.owner}, {"value", v.value}};
      }
      objects[k.kind] = std::move(store);
    }
    return {{"classes", classes}, {"entities", entities}, {"tombstones", tombstones}, {"objects", objects}};
  }

  /// Folds another replica's state in with the same LWW rules.
  void merge(const json& state) {
    for (const auto& c : io::field(state, "classes")) {
      auto cls = parse_entity_class(c);
      if (!db_.find_class(cls.name)) db_.add_class(std::move(cls));
    }
    for (const auto& e : io::field(state, "entities")) apply(MsgType::entity_update, e);
    for (const auto& [id, s] : io::field(state, "tombstones").items()) {
      db_.remove(id, io::uint(s, "version"), io::string(s, "owner"));
    }
    const auto& objects = io::field(state, "objects");
    for (const auto& k : detail::kObjectKinds) {
      if (!objects.contains(k.kind)) continue;
      for (const auto& [id, v] : objects[k.kind].items()) {
        put(k.kind, id, {io::uint(v, "version"), io::string(v, "owner")}, io::field(v, "value"));
      }
    }
  }

  std::uint64_t hash() const { return fnv1a(canonical(state())); }

  static std::uint64_t fnv1a(std::string_view bytes) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : bytes) {
      h ^= c;
      h *= 1099511628211ull;
    }
    return h;
  }

 private:
  ApplyResult put(const std::string& kind, const std::string& id, const Stamp& stamp, json value) {
    auto& store = objects_[kind];
    auto it = store.find(id);
    if (it != store.end() && !(stamp > it->second.stamp)) return ApplyResult::ignored;
    store[id] = {stamp, std::move(value)};
    return ApplyResult::applied;
  }

  EntityDatabase db_;
  std::map<std::string, std::map<std::string, Versioned>> objects_;
};

inline ApplyResult apply_remote(Replica& replica, const Message& m) { return replica.apply(m); }

// ---------------------------------------------------------------------------
// Payload builders

inline json entity_update_payload(const Entity& e) { return to_json(e); }

inline json entity_remove_payload(const EntityId& id, std::uint64_t version, const FederateId& owner) {
  return {{"id", id}, {"version", version}, {"owner", owner}};
}

inline json object_payload(MsgType type, const std::string& id, std::uint64_t version,
                           const FederateId& owner, json value) {
  const auto* kind = detail::object_kind(type);
  if (!kind) throw MalformedPayload("not an object message");
  return {{"id", id}, {"version", version}, {"owner", owner}, {kind->value_key, std::move(value)}};
}

// ---------------------------------------------------------------------------
// Federate-side endpoint

enum class FederateKind { mobile, c2, ui };

inline const char* to_string(FederateKind k) {
  switch (k) {
    case FederateKind::mobile: return "mobile";
    case FederateKind::c2: return "c2";
    case FederateKind::ui: return "ui";
  }
  return "?";
}

inline FederateKind parse_federate_kind(std::string_view s) {
  if (s == "mobile") return FederateKind::mobile;
  if (s == "c2") return FederateKind::c2;
  if (s == "ui") return FederateKind::ui;
  throw MalformedPayload("unknown federate kind '" + std::string(s) + "'");
}

/// A participant's local replica and outgoing sequence counter. Own updates
/// are applied locally before they are sent.
class Federate {
 public:
  Federate(FederateId id, FederateKind kind, const std::vector<EntityClass>& classes,
           std::optional<std::set<MsgType>> subscriptions = std::nullopt)
      : id_(std::move(id)), kind_(kind), replica_(classes), subscriptions_(std::move(subscriptions)) {}

  const FederateId& id() const { return id_; }
  FederateKind kind() const { return kind_; }
  Replica& replica() { return replica_; }
  const Replica& replica() const { return replica_; }

  Message make(MsgType type, json payload) {
    if (payload.is_null()) payload = json::object();
    return {type, id_, ++seq_, std::move(payload)};
  }

  Message join() {
    json p{{"kind", to_string(kind_)}};
    if (subscriptions_) {
      json subs = json::array();
      for (auto t : *subscriptions_) subs.push_back(to_string(t));
      p["subscriptions"] = subs;
    }
    return make(MsgType::join, std::move(p));
  }

  Message publish(MsgType type, json payload) {
    replica_.apply(type, payload);
    return make(type, std::move(payload));
  }

  ApplyResult receive(const Message& m) {
    if (m.type == MsgType::snapshot) {
      replica_.merge(io::field(m.payload, "state"));
      return ApplyResult::applied;
    }
    if (m.type == MsgType::welcome) {
      welcomed_ = true;
      return ApplyResult::not_mutation;
    }
    return replica_.apply(m);
  }

  bool welcomed() const { return welcomed_; }

 private:
  FederateId id_;
  FederateKind kind_;
  Replica replica_;
  std::optional<std::set<MsgType>> subscriptions_;
  std::uint64_t seq_ = 0;
  bool welcomed_ = false;
};

}  // namespace sa
