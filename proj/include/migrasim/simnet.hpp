#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "migrasim/time.hpp"

namespace migrasim {

// ---------------------------------------------------------------------------
// Event queue
// ---------------------------------------------------------------------------

// Deterministic discrete-event core. Events fire in (time, insertion-sequence)
// order, so two events at the same instant run in the order they were
// scheduled — the single tie-break rule for the whole simulator.
class EventQueue {
  public:
    using Action = std::function<void()>;

    SimTime now() const { return now_; }
    std::size_t pending() const { return heap_.size(); }
    std::uint64_t processed() const { return processed_; }

    // Throws if `at` is in the past. Same-instant scheduling is allowed.
    void schedule(SimTime at, Action action);

    // Runs until no events remain and returns the time of the last event
    // (0 for an empty queue). Throws after `max_events` fired — the livelock
    // guard for misbehaving control loops.
    SimTime run_until_quiescent(std::uint64_t max_events);

  private:
    struct Event {
        SimTime at = 0;
        std::uint64_t seq = 0;
        Action action;
    };
    struct Later {
        bool operator()(const Event& a, const Event& b) const {
            if (a.at != b.at) return a.at > b.at;
            return a.seq > b.seq;
        }
    };

    std::vector<Event> heap_;
    SimTime now_ = 0;
    std::uint64_t next_seq_ = 0;
    std::uint64_t processed_ = 0;
};

// ---------------------------------------------------------------------------
// Network
// ---------------------------------------------------------------------------

struct LinkSpec {
    int a = -1;
    int b = -1;
    std::int64_t bandwidth_bps = 0;
    SimTime latency = 0;
};

// Point-to-point links with store-and-forward FIFO serialization per
// direction: a message starts transmitting when the link's previous
// transmission finished, and arrives one propagation latency after its own
// transmission ends. There is no routing — sends between nodes with no direct
// link are dropped (and counted); relaying is an explicit application concern.
class Network {
  public:
    using DeliverFn = std::function<void(int dst, std::uint64_t msg_id)>;

    explicit Network(EventQueue& queue) : queue_(&queue) {}

    void add_link(const LinkSpec& spec); // adds both directions
    bool has_link(int src, int dst) const { return link_index(src, dst) >= 0; }
    std::int64_t bandwidth_bps(int src, int dst) const;
    SimTime latency(int src, int dst) const;

    // Schedules delivery of `msg_id` (an opaque handle owned by the caller)
    // and returns the arrival time; returns -1 and counts a drop when no link
    // exists.
    SimTime send(int src, int dst, std::uint64_t bytes, std::uint64_t msg_id, DeliverFn deliver);

    std::uint64_t sent_count() const { return sent_; }
    std::uint64_t delivered_count() const { return delivered_; }
    std::uint64_t dropped_unroutable() const { return dropped_; }

  private:
    struct Directed {
        int src;
        int dst;
        std::int64_t bandwidth_bps;
        SimTime latency;
        SimTime busy_until = 0;
    };

    int link_index(int src, int dst) const;

    EventQueue* queue_;
    std::vector<Directed> links_;
    std::uint64_t sent_ = 0;
    std::uint64_t delivered_ = 0;
    std::uint64_t dropped_ = 0;
};

} // namespace migrasim
