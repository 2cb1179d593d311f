#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "migrasim/time.hpp"

namespace migrasim {

enum class LogKind : std::uint8_t {
    CtrlSent,
    CtrlDelivered,
    MarkerSent,
    MarkerDelivered,
    AckSent,
    AckDelivered,
    BlobSent,
    BlobDelivered,
    StateLoaded,
    OpCreated,
    OpStarted,
    OpStopped,
    BufferArmed,
    BufferDrained,
    ScheduleArmed,
    ScheduleFired,
    CheckpointTaken,
    CheckpointReplicated,
    ReplicationFailed,
    MigrationTriggered,
    MigrationCompleted,
    MigrationAborted,
    DecisionCheck,
    DataDropped,
    DataForwarded,
    TraceTuple,
    Warning,
};

const char* log_kind_name(LogKind k);

struct LogEntry {
    SimTime t = 0;
    LogKind kind = LogKind::Warning;
    std::int32_t node = -1;
    std::int32_t migration = -1;
    std::int32_t query = -1;
    std::int32_t stream = -1;
    std::uint64_t a = 0; // kind-specific: bytes, seq, count
    std::uint64_t b = 0;
};

// Tuple arrivals at migration participants, recorded only while a migration
// is in flight. Bounded by migration duration; used for the affected-input
// count and duplicate accounting.
struct ArrivalEntry {
    SimTime t = 0;
    std::int32_t node = -1;
    std::int32_t stream = -1;
    std::uint64_t seq = 0;
};

// Whole-run aggregates the log maintains itself; algorithm code never
// computes metrics directly.
struct DataCounters {
    std::uint64_t tuples_emitted = 0;
    std::uint64_t tuple_sends = 0;
    std::uint64_t bytes_sent = 0;
    std::uint64_t duplicate_sends = 0;  // fan-out beyond the first hop, plus forwards
    std::uint64_t bytes_duplicated = 0;
    std::uint64_t buffered_tuples = 0;  // enqueued into migration buffers
    std::uint64_t bytes_buffered = 0;
    std::uint64_t dropped_tuples = 0;   // arrived for a released/absent operator
    std::uint64_t covered_drops = 0;    // dropped as already covered by moved state
    std::uint64_t sink_duplicates = 0;  // deduplicated at sinks by (stream, seq)
    std::uint64_t late_drops = 0;
    std::uint64_t suppressed_outputs = 0;
    std::uint64_t forwarded_tuples = 0;
};

class EventLog {
  public:
    void set_trace(bool on) { trace_ = on; }
    bool trace() const { return trace_; }

    void record(LogEntry e) { entries_.push_back(e); }
    void record_arrival(const ArrivalEntry& e) { arrivals_.push_back(e); }

    const std::vector<LogEntry>& entries() const { return entries_; }
    const std::vector<ArrivalEntry>& arrivals() const { return arrivals_; }
    DataCounters& counters() { return counters_; }
    const DataCounters& counters() const { return counters_; }

    // Order-sensitive digest of the control-plane log; equal digests mean
    // equal logs, which is how determinism is asserted.
    std::uint64_t digest() const;

  private:
    std::vector<LogEntry> entries_;
    std::vector<ArrivalEntry> arrivals_;
    DataCounters counters_;
    bool trace_ = false;
};

struct LatencyStats {
    std::uint64_t outputs_compared = 0;
    std::uint64_t affected_outputs = 0; // outputs arriving later than in the baseline
    double mean_added_s = 0;            // mean added latency over affected outputs
    double max_added_s = 0;
};

struct MetricsRecord {
    std::int32_t migration_id = -1;
    std::string variant;
    std::string status; // completed | aborted | incomplete
    double trigger_s = 0;
    double done_s = 0;
    double freeze_s = 0;         // max(0, new-host start - old-host stop)
    double state_movement_s = 0; // first migration blob send -> last migration blob arrival
    std::uint64_t state_moved_bytes = 0;
    std::uint64_t state_replicated_bytes = 0;
    std::uint64_t control_messages = 0; // envelopes + in-band markers
    std::uint64_t control_expected = 0; // static count from the program shape
    std::uint64_t acks = 0;
    std::uint64_t affected_inputs = 0; // inputs arriving at participants inside the freeze window
    std::uint64_t buffered_tuples = 0;
    std::uint64_t buffered_bytes = 0;
    std::uint64_t duplicate_sends = 0;
    std::uint64_t bytes_duplicated = 0;
};

// Derives one migration's metrics from the log. Throws if the log shows a
// stop without a matching start for a migration marked completed (an
// incomplete migration is a correctness bug, not a metric).
MetricsRecord compute_metrics(const EventLog& log, std::int32_t migration_id);

// All migrations in the log, in trigger order.
std::vector<MetricsRecord> compute_all_metrics(const EventLog& log);

// Fixed-point seconds with six decimals; the CSV writers use this everywhere
// so identical runs serialize byte-identically.
std::string format_seconds(double s);

std::string metrics_csv_header();
std::string metrics_csv_row(const MetricsRecord& m, const LatencyStats* latency);
std::string metrics_json(const std::vector<MetricsRecord>& records,
                         const std::vector<LatencyStats>& latency);

} // namespace migrasim
