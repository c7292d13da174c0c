// Star-topology hub: per-sender sequence checks, subscription routing, and
// snapshot replies from its own replica.
#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "sa/protocol.hpp"

namespace sa {

struct Delivery {
  FederateId to;
  Message message;
};

struct HubOutcome {
  std::vector<Delivery> deliveries;
  std::optional<std::string> error;  // notice for the log; never sent as a message
  bool close_sender = false;
};

class Hub {
 public:
  struct Member {
    FederateKind kind = FederateKind::mobile;
    std::set<MsgType> subscriptions;
    std::uint64_t last_seq = 0;
  };

  explicit Hub(const std::vector<EntityClass>& classes, FederateId id = "hub")
      : id_(std::move(id)), replica_(classes) {}

  const FederateId& id() const { return id_; }
  const Replica& replica() const { return replica_; }
  const std::map<FederateId, Member>& members() const { return members_; }
  bool joined(const FederateId& f) const { return members_.contains(f); }

  /// Routes one inbound message. Only JOIN and SNAPSHOT_REQ produce replies.
  HubOutcome handle(const Message& m) {
    HubOutcome out;
    if (m.type == MsgType::join) {
      if (auto it = members_.find(m.sender); it != members_.end() && m.seq <= it->second.last_seq) {
        return out;
      }
      Member member;
      try {
        member.kind = parse_federate_kind(io::string(m.payload, "kind"));
        member.subscriptions = routable_types();
        if (m.payload.contains("subscriptions")) {
          member.subscriptions.clear();
          for (const auto& t : m.payload["subscriptions"]) {
            if (!t.is_string()) throw MalformedPayload("subscriptions: expected names");
            member.subscriptions.insert(parse_msg_type(t.get<std::string>()));
          }
        }
      } catch (const MalformedPayload& e) {
        out.error = std::string("bad JOIN from ") + m.sender + ": " + e.what();
        out.close_sender = true;
        return out;
      }
      member.last_seq = m.seq;
      members_[m.sender] = std::move(member);
      out.deliveries.push_back(
          {m.sender, own(MsgType::welcome, {{"federate", m.sender}, {"hub", id_}})});
      out.deliveries.push_back({m.sender, snapshot()});
      return out;
    }

    auto it = members_.find(m.sender);
    if (it == members_.end()) {
      out.error = "message from unknown federate '" + m.sender + "'";
      out.close_sender = true;
      return out;
    }
    if (m.seq == it->second.last_seq) return out;  // duplicate
    if (m.seq < it->second.last_seq) {
      out.error = "sequence regression from " + m.sender + ": " + std::to_string(m.seq) + " after " +
                  std::to_string(it->second.last_seq);
      return out;
    }
    it->second.last_seq = m.seq;

    if (m.type == MsgType::snapshot_req) {
      out.deliveries.push_back({m.sender, snapshot()});
      return out;
    }
    if (!routable_types().contains(m.type)) {
      out.error = "unexpected " + std::string(to_string(m.type)) + " from " + m.sender;
      return out;
    }
    try {
      replica_.apply(m);
    } catch (const MalformedPayload& e) {
      out.error = "malformed " + std::string(to_string(m.type)) + " from " + m.sender + ": " + e.what();
      return out;
    }
    for (const auto& [fid, member] : members_) {
      if (fid != m.sender && member.subscriptions.contains(m.type)) out.deliveries.push_back({fid, m});
    }
    return out;
  }

  void leave(const FederateId& f) { members_.erase(f); }

 private:
  Message own(MsgType type, json payload) { return {type, id_, ++seq_, std::move(payload)}; }
  Message snapshot() { return own(MsgType::snapshot, {{"state", replica_.state()}}); }

  FederateId id_;
  Replica replica_;
  std::map<FederateId, Member> members_;
  std::uint64_t seq_ = 0;
};

}  // namespace sa
