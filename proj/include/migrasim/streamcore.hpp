#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "migrasim/statemgmt.hpp"
#include "migrasim/time.hpp"

namespace migrasim {

// A data tuple. Identity is (stream, seq); seq is strictly increasing per
// stream at the source, and operator outputs derive their seq from the inputs
// that caused them, so an output's identity is the same no matter which host
// produced it.
struct Tuple {
    std::int32_t stream = -1;
    std::int64_t key = 0;
    SimTime ts = 0;
    std::uint64_t seq = 0;
    std::uint32_t payload_bytes = 0;
    std::int64_t value = 0; // aggregate outputs: window count

    bool operator==(const Tuple&) const = default;
};

inline std::uint64_t tuple_wire_bytes(const Tuple& t) {
    return static_cast<std::uint64_t>(t.payload_bytes) + kRecordOverheadBytes;
}

enum class OpKind : std::uint8_t { Filter, Join, Aggregate };

struct WindowSpec {
    SimTime extent = 0;
    SimTime slide = 0; // == extent for tumbling windows
};

struct QueryDef {
    std::int32_t id = -1;
    std::string name;
    OpKind kind = OpKind::Filter;
    // Join: [build, probe]. Filter/Aggregate: [input].
    std::vector<std::int32_t> input_streams;
    std::int32_t output_stream = -1;
    WindowSpec window;           // Aggregate only
    std::int64_t pass_every = 1; // Filter: pass keys with key % pass_every == 0

    bool stateful() const { return kind != OpKind::Filter; }
};

// Output-suppression rules for replicas that run in parallel with the host
// they replace. Negative values disable a rule.
struct ReplicaRules {
    // Suppress outputs whose triggering input has ts < this (the old host
    // still owns those inputs).
    SimTime emit_input_floor = -1;
    // Emit only windows that close after this instant (the old host emits the
    // rest).
    SimTime window_emit_after = -1;
    // Drop windows that opened before this instant: a replica started
    // mid-stream has not observed them completely.
    SimTime observe_floor = -1;
};

// One operator instance. Pure stream logic: no notion of hosts, pausing or
// buffering (the runtime layers those on top). Processing is deterministic in
// arrival order; event time only flows through watermarks.
class Operator {
  public:
    explicit Operator(const QueryDef& def);

    const QueryDef& def() const { return def_; }

    // Processes one input tuple, appending any outputs. Inputs at or below the
    // covered mark of their stream (already reflected in loaded state) are
    // dropped. Returns false for such drops.
    bool process(const Tuple& in, std::vector<Tuple>& out);

    // Advances event time without a tuple (stream cut), closing any windows
    // that end at or before `ts`.
    void advance_watermark(SimTime ts, std::vector<Tuple>& out);

    SimTime watermark() const { return watermark_; }
    const std::map<std::int32_t, std::uint64_t>& covered() const { return covered_; }
    std::uint64_t covered_drops() const { return covered_drops_; }
    std::uint64_t late_drops() const { return late_drops_; }
    std::uint64_t suppressed_outputs() const { return suppressed_; }

    void set_rules(const ReplicaRules& r) { rules_ = r; }
    const ReplicaRules& rules() const { return rules_; }

    // --- state transfer ---------------------------------------------------
    // Monotone mark advanced by every state mutation; extract(since) returns
    // exactly the mutations after `since`, so extract(0) is the full state.
    std::uint64_t mark() const { return mark_; }
    std::uint64_t record_count() const;
    std::uint64_t state_bytes() const; // size-model bytes of a full extraction
    StateBlob extract(std::uint64_t since_mark) const;
    // Merges a blob: entries insert seq-ordered per key, accumulators add.
    // Precondition: the blob's covered ranges are disjoint from what this
    // instance processed live, and multi-version chains were flattened
    // (Checkpoint::reconstruct) first — increments carry full current values
    // and would double-count if loaded additively on their base.
    void load(const StateBlob& blob);

  private:
    void bump_watermark(SimTime ts, std::vector<Tuple>& out);
    void flush_windows(std::vector<Tuple>& out);
    void emit(const Tuple& t, SimTime trigger_ts, std::vector<Tuple>& out);

    QueryDef def_;
    ReplicaRules rules_;
    SimTime watermark_ = -1;
    std::map<std::int32_t, std::uint64_t> covered_;
    std::uint64_t mark_ = 0;
    std::uint64_t covered_drops_ = 0;
    std::uint64_t late_drops_ = 0;
    std::uint64_t suppressed_ = 0;

    // Join: build entries per key, each vector seq-ascending; `entry_marks_`
    // parallels per-key entries with the mark at which each arrived.
    struct BuildEntry {
        std::uint64_t seq;
        SimTime ts;
        std::uint32_t payload_bytes;
        std::uint64_t mark;
    };
    std::map<std::int64_t, std::vector<BuildEntry>> build_;

    // Aggregate: (window start, key) -> (count, last-touch mark).
    struct Acc {
        std::int64_t count = 0;
        std::uint64_t mark = 0;
    };
    std::map<std::pair<SimTime, std::int64_t>, Acc> accs_;
};

// Content-derived output identities (see Tuple).
std::uint64_t join_out_seq(std::uint64_t probe_seq, std::uint64_t build_seq);
std::uint64_t window_out_seq(std::int64_t window_index, std::int64_t key);

// Keys must fit the content-derived seq layout.
inline constexpr std::int64_t kMaxKey = (1LL << 31) - 1;

} // namespace migrasim
