// Deterministic in-memory transport between federates and a hub, with
// seeded delay, duplication and bounded reordering. Nothing is ever lost
// except downlink traffic to a federate that has disconnected.
#pragma once

#include <cstdio>
#include <deque>
#include <map>
#include <queue>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "sa/hub.hpp"
#include "sa/protocol.hpp"

namespace sa {

struct ChaosConfig {
  double delay_min_ms = 0.0;
  double delay_max_ms = 0.0;
  double duplicate_prob = 0.0;
  std::size_t reorder_window = 0;  // 0 or 1: FIFO downlinks
  std::uint64_t seed = 1;

  void validate() const {
    if (!(delay_min_ms >= 0.0 && delay_max_ms >= delay_min_ms)) {
      throw std::invalid_argument("delay range must satisfy 0 <= min <= max");
    }
    if (!(duplicate_prob >= 0.0 && duplicate_prob <= 1.0)) {
      throw std::invalid_argument("duplicate probability must be in [0, 1]");
    }
  }
};

/// Uplinks (federate to hub) are FIFO with delay; a duplicated uplink frame
/// follows its original and is dropped by the hub's sequence check.
/// Downlinks (hub to federate) get delay, duplication and reordering within
/// `reorder_window` pending frames.
class SimNetwork {
 public:
  SimNetwork(Hub& hub, ChaosConfig cfg) : hub_(hub), cfg_(cfg), rng_(cfg.seed) { cfg_.validate(); }

  void attach(Federate& f) {
    auto& link = links_[f.id()];
    link.federate = &f;
    link.connected = true;
    uplink(f.id(), f.join());
  }

  /// Applies locally and sends; buffered while disconnected.
  void publish(Federate& f, MsgType type, json payload) {
    Message m = f.publish(type, std::move(payload));
    send(f.id(), std::move(m));
  }

  void send(const FederateId& from, Message m) {
    auto& link = links_.at(from);
    if (!link.connected) {
      link.outbox.push_back(std::move(m));
      return;
    }
    uplink(from, std::move(m));
  }

  /// Graceful close: frames already sent still reach the hub, frames in
  /// flight toward the federate are dropped.
  void disconnect(const FederateId& id) {
    auto& link = links_.at(id);
    if (!link.connected) return;
    link.connected = false;
    link.pending.clear();
    ++link.epoch;
    schedule({std::max(now_, link.uplink_clear), 0, Event::Kind::leave, id, {}, link.epoch});
  }

  void rejoin(const FederateId& id) {
    auto& link = links_.at(id);
    if (link.connected) return;
    link.connected = true;
    ++link.epoch;
    uplink(id, link.federate->join());
    auto outbox = std::move(link.outbox);
    link.outbox.clear();
    for (auto& m : outbox) uplink(id, link.federate->make(m.type, std::move(m.payload)));
  }

  /// Processes events until nothing is in flight. Returns the event count.
  std::size_t run_until_quiescent(std::size_t max_events = 10'000'000) {
    std::size_t n = 0;
    while (!queue_.empty()) {
      if (++n > max_events) throw std::runtime_error("network did not quiesce");
      Event ev = queue_.top();
      queue_.pop();
      now_ = ev.time;
      dispatch(std::move(ev));
    }
    return n;
  }

  bool quiescent() const { return queue_.empty(); }
  double now() const { return now_; }
  const std::vector<std::string>& trace() const { return trace_; }
  const std::vector<std::string>& errors() const { return errors_; }
  std::size_t frames_sent() const { return sent_; }
  std::size_t frames_delivered() const { return delivered_; }

 private:
  struct Event {
    enum class Kind { uplink, downlink, leave };
    double time;
    std::uint64_t order;
    Kind kind;
    FederateId federate;
    Message message;
    std::uint64_t epoch = 0;
  };
  struct Later {
    bool operator()(const Event& a, const Event& b) const {
      return a.time != b.time ? a.time > b.time : a.order > b.order;
    }
  };
  struct Link {
    Federate* federate = nullptr;
    bool connected = false;
    std::uint64_t epoch = 0;
    double uplink_clear = 0.0;  // arrival time of the last uplink frame
    std::deque<Message> pending;
    std::vector<Message> outbox;
  };

  double delay() {
    if (cfg_.delay_max_ms == cfg_.delay_min_ms) return cfg_.delay_min_ms;
    return std::uniform_real_distribution<double>(cfg_.delay_min_ms, cfg_.delay_max_ms)(rng_);
  }
  bool duplicate() { return cfg_.duplicate_prob > 0.0 && std::bernoulli_distribution(cfg_.duplicate_prob)(rng_); }

  void schedule(Event ev) {
    ev.order = order_++;
    queue_.push(std::move(ev));
  }

  void uplink(const FederateId& from, Message m) {
    auto& link = links_.at(from);
    const int copies = duplicate() ? 2 : 1;
    for (int i = 0; i < copies; ++i) {
      link.uplink_clear = std::max(link.uplink_clear, now_ + delay());
      schedule({link.uplink_clear, 0, Event::Kind::uplink, from, m, link.epoch});
      ++sent_;
    }
  }

  void downlink(const FederateId& to, const Message& m) {
    auto& link = links_.at(to);
    if (!link.connected) return;
    const int copies = duplicate() ? 2 : 1;
    for (int i = 0; i < copies; ++i) {
      link.pending.push_back(m);
      schedule({now_ + delay(), 0, Event::Kind::downlink, to, {}, link.epoch});
    }
  }

  void dispatch(Event ev) {
    switch (ev.kind) {
      case Event::Kind::uplink: {
        log("up", ev.federate, hub_.id(), ev.message);
        auto outcome = hub_.handle(ev.message);
        if (outcome.error) errors_.push_back(*outcome.error);
        for (const auto& d : outcome.deliveries) downlink(d.to, d.message);
        if (outcome.close_sender) disconnect(ev.federate);
        break;
      }
      case Event::Kind::downlink: {
        auto& link = links_.at(ev.federate);
        if (ev.epoch != link.epoch || link.pending.empty()) break;
        const std::size_t window = std::min(std::max<std::size_t>(cfg_.reorder_window, 1), link.pending.size());
        const std::size_t pick =
            window == 1 ? 0 : std::uniform_int_distribution<std::size_t>(0, window - 1)(rng_);
        Message m = std::move(link.pending[pick]);
        link.pending.erase(link.pending.begin() + static_cast<std::ptrdiff_t>(pick));
        log("down", hub_.id(), ev.federate, m);
        ++delivered_;
        try {
          link.federate->receive(m);
        } catch (const MalformedPayload& e) {
          errors_.push_back(ev.federate + ": " + e.what());
        }
        break;
      }
      case Event::Kind::leave:
        if (!links_.at(ev.federate).connected) hub_.leave(ev.federate);
        break;
    }
  }

  void log(const char* dir, const FederateId& from, const FederateId& to, const Message& m) {
    char t[32];
    std::snprintf(t, sizeof t, "%.6f", now_);
    trace_.push_back(std::string(t) + " " + dir + " " + from + "->" + to + " " +
                     std::string(to_string(m.type)) + " " + m.sender + "#" + std::to_string(m.seq));
  }

  Hub& hub_;
  ChaosConfig cfg_;
  std::mt19937_64 rng_;
  std::priority_queue<Event, std::vector<Event>, Later> queue_;
  std::map<FederateId, Link> links_;
  std::uint64_t order_ = 0;
  double now_ = 0.0;
  std::vector<std::string> trace_;
  std::vector<std::string> errors_;
  std::size_t sent_ = 0;
  std::size_t delivered_ = 0;
};

}  // namespace sa
