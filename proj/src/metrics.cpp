#include "migrasim/metrics.hpp"

#include <cinttypes>
#include <cstdio>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace migrasim {

namespace {

constexpr const char* kLogKindNames[] = {
    "ctrl-sent",      "ctrl-delivered", "marker-sent",     "marker-delivered",
    "ack-sent",       "ack-delivered",  "blob-sent",       "blob-delivered",
    "state-loaded",   "op-created",     "op-started",      "op-stopped",
    "buffer-armed",   "buffer-drained", "schedule-armed",  "schedule-fired",
    "checkpoint-taken", "checkpoint-replicated", "replication-failed",
    "migration-triggered", "migration-completed", "migration-aborted",
    "decision-check", "data-dropped",   "data-forwarded",  "trace-tuple",
    "warning",
};

inline std::uint64_t fnv1a(std::uint64_t h, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
        h ^= (v >> (i * 8)) & 0xff;
        h *= 1099511628211ULL;
    }
    return h;
}

} // namespace

const char* log_kind_name(LogKind k) { return kLogKindNames[static_cast<std::size_t>(k)]; }

std::uint64_t EventLog::digest() const {
    std::uint64_t h = 14695981039346656037ULL;
    for (const LogEntry& e : entries_) {
        h = fnv1a(h, static_cast<std::uint64_t>(e.t));
        h = fnv1a(h, static_cast<std::uint64_t>(e.kind));
        h = fnv1a(h, static_cast<std::uint64_t>(static_cast<std::int64_t>(e.node)));
        h = fnv1a(h, static_cast<std::uint64_t>(static_cast<std::int64_t>(e.migration)));
        h = fnv1a(h, static_cast<std::uint64_t>(static_cast<std::int64_t>(e.query)));
        h = fnv1a(h, static_cast<std::uint64_t>(static_cast<std::int64_t>(e.stream)));
        h = fnv1a(h, e.a);
        h = fnv1a(h, e.b);
    }
    h = fnv1a(h, counters_.tuples_emitted);
    h = fnv1a(h, counters_.tuple_sends);
    h = fnv1a(h, counters_.bytes_sent);
    h = fnv1a(h, counters_.duplicate_sends);
    h = fnv1a(h, counters_.bytes_duplicated);
    h = fnv1a(h, counters_.sink_duplicates);
    return h;
}

MetricsRecord compute_metrics(const EventLog& log, std::int32_t migration_id) {
    MetricsRecord m;
    m.migration_id = migration_id;

    SimTime trigger = -1, done = -1;
    SimTime first_stop = -1, first_start = -1;
    SimTime first_blob_sent = -1, last_blob_arrival = -1;
    bool seen = false;
    for (const LogEntry& e : log.entries()) {
        if (e.migration != migration_id) continue;
        seen = true;
        switch (e.kind) {
        case LogKind::MigrationTriggered:
            trigger = e.t;
            m.control_expected = e.a;
            break;
        case LogKind::MigrationCompleted:
            done = e.t;
            m.status = "completed";
            break;
        case LogKind::MigrationAborted:
            done = e.t;
            m.status = "aborted";
            break;
        case LogKind::OpStopped:
            if (first_stop < 0) first_stop = e.t;
            break;
        case LogKind::OpStarted:
            if (first_start < 0) first_start = e.t;
            break;
        case LogKind::BlobSent:
            if (e.b == 0) { // migration purpose
                if (first_blob_sent < 0) first_blob_sent = e.t;
            }
            break;
        case LogKind::BlobDelivered:
            if (e.b == 0) {
                last_blob_arrival = e.t;
                m.state_moved_bytes += e.a;
            }
            break;
        case LogKind::CtrlSent:
        case LogKind::MarkerSent:
            ++m.control_messages;
            break;
        case LogKind::AckSent:
            ++m.acks;
            break;
        case LogKind::BufferDrained:
            m.buffered_tuples += e.a;
            m.buffered_bytes += e.b;
            break;
        default:
            break;
        }
    }
    if (!seen) throw std::runtime_error("no log entries for migration " + std::to_string(migration_id));
    if (m.status.empty()) m.status = "incomplete";
    m.trigger_s = seconds(trigger < 0 ? 0 : trigger);
    m.done_s = seconds(done < 0 ? 0 : done);

    if (first_stop >= 0 && first_start >= 0) {
        m.freeze_s = first_start > first_stop ? seconds(first_start - first_stop) : 0.0;
    } else if (first_stop >= 0 && first_start < 0 && m.status == "completed") {
        throw std::runtime_error("migration " + std::to_string(migration_id) +
                                 " completed but the operator never restarted: stop without start");
    } else {
        m.freeze_s = 0.0;
    }
    if (first_blob_sent >= 0 && last_blob_arrival >= 0) {
        m.state_movement_s = seconds(last_blob_arrival - first_blob_sent);
    }

    // Inputs whose processing fell into the freeze window.
    if (first_stop >= 0 && first_start > first_stop) {
        for (const ArrivalEntry& a : log.arrivals()) {
            if (a.t >= first_stop && a.t < first_start) ++m.affected_inputs;
        }
    }

    // Replication traffic is run-scoped (the daemon is not tied to one
    // migration); duplication likewise.
    for (const LogEntry& e : log.entries()) {
        if (e.kind == LogKind::BlobDelivered && e.b == 1) m.state_replicated_bytes += e.a;
    }
    m.duplicate_sends = log.counters().duplicate_sends;
    m.bytes_duplicated = log.counters().bytes_duplicated;
    return m;
}

std::vector<MetricsRecord> compute_all_metrics(const EventLog& log) {
    std::vector<MetricsRecord> out;
    for (const LogEntry& e : log.entries()) {
        if (e.kind == LogKind::MigrationTriggered) out.push_back(compute_metrics(log, e.migration));
    }
    return out;
}

std::string format_seconds(double s) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", s);
    return buf;
}

std::string metrics_csv_header() {
    return "migration_id,variant,status,trigger_s,done_s,freeze_s,state_movement_s,"
           "state_moved_bytes,state_replicated_bytes,control_messages,control_expected,acks,"
           "affected_inputs,buffered_tuples,buffered_bytes,duplicate_sends,bytes_duplicated,"
           "outputs_compared,affected_outputs,mean_added_latency_s,max_added_latency_s";
}

std::string metrics_csv_row(const MetricsRecord& m, const LatencyStats* latency) {
    char buf[256];
    std::string row;
    row += std::to_string(m.migration_id) + ',' + m.variant + ',' + m.status + ',';
    row += format_seconds(m.trigger_s) + ',' + format_seconds(m.done_s) + ',';
    row += format_seconds(m.freeze_s) + ',' + format_seconds(m.state_movement_s) + ',';
    std::snprintf(buf, sizeof buf, "%" PRIu64 ",%" PRIu64 ",%" PRIu64 ",%" PRIu64 ",%" PRIu64 ",%" PRIu64 ",%" PRIu64 ",%" PRIu64 ",%" PRIu64 ",%" PRIu64 ",",
                  m.state_moved_bytes, m.state_replicated_bytes, m.control_messages, m.control_expected,
                  m.acks, m.affected_inputs, m.buffered_tuples, m.buffered_bytes, m.duplicate_sends,
                  m.bytes_duplicated);
    row += buf;
    if (latency != nullptr) {
        std::snprintf(buf, sizeof buf, "%" PRIu64 ",%" PRIu64 ",", latency->outputs_compared,
                      latency->affected_outputs);
        row += buf;
        row += format_seconds(latency->mean_added_s) + ',' + format_seconds(latency->max_added_s);
    } else {
        row += "0,0," + format_seconds(0) + ',' + format_seconds(0);
    }
    return row;
}

std::string metrics_json(const std::vector<MetricsRecord>& records,
                         const std::vector<LatencyStats>& latency) {
    nlohmann::json arr = nlohmann::json::array();
    for (std::size_t i = 0; i < records.size(); ++i) {
        const MetricsRecord& m = records[i];
        nlohmann::json j;
        j["migration_id"] = m.migration_id;
        j["variant"] = m.variant;
        j["status"] = m.status;
        j["trigger_s"] = m.trigger_s;
        j["done_s"] = m.done_s;
        j["freeze_s"] = m.freeze_s;
        j["state_movement_s"] = m.state_movement_s;
        j["state_moved_bytes"] = m.state_moved_bytes;
        j["state_replicated_bytes"] = m.state_replicated_bytes;
        j["control_messages"] = m.control_messages;
        j["control_expected"] = m.control_expected;
        j["acks"] = m.acks;
        j["affected_inputs"] = m.affected_inputs;
        j["buffered_tuples"] = m.buffered_tuples;
        j["buffered_bytes"] = m.buffered_bytes;
        j["duplicate_sends"] = m.duplicate_sends;
        j["bytes_duplicated"] = m.bytes_duplicated;
        if (i < latency.size()) {
            j["outputs_compared"] = latency[i].outputs_compared;
            j["affected_outputs"] = latency[i].affected_outputs;
            j["mean_added_latency_s"] = latency[i].mean_added_s;
            j["max_added_latency_s"] = latency[i].max_added_s;
        }
        arr.push_back(j);
    }
    return arr.dump(2);
}

} // namespace migrasim
