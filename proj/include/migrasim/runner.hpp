#pragma once

#include <memory>

#include "migrasim/metrics.hpp"
#include "migrasim/scenario.hpp"

namespace migrasim {

struct RunConfig {
    bool enable_migrations = true; // false: baseline twin (checkpoints still run)
    bool trace = false;
};

struct RunOutput {
    SimTime end_time = 0;
    std::vector<SinkRecord> sink_records;
    std::vector<MigrationOutcome> outcomes;
    std::vector<MetricsRecord> metrics; // per migration, trigger order
    DataCounters counters;
    std::uint64_t log_digest = 0;
    std::vector<LogEntry> log_entries;
};

RunOutput run_scenario(const Scenario& sc, const RunConfig& cfg = {});

// Output equivalence and latency impact, joined by (node, stream, sequence).
struct OutputJoin {
    bool equivalent = false;    // same output multiset, same content
    std::uint64_t matched = 0;
    std::uint64_t missing = 0;  // in the baseline only
    std::uint64_t extra = 0;    // in the migrated run only
    std::uint64_t mismatched = 0; // same identity, different content
    LatencyStats latency;
};

OutputJoin join_outputs(const std::vector<SinkRecord>& baseline,
                        const std::vector<SinkRecord>& migrated);

struct CompareOutput {
    RunOutput baseline;
    RunOutput migrated;
    OutputJoin join;
};

// Runs the scenario twice — with and without its migrations — and joins the
// sink outputs.
CompareOutput run_compare(const Scenario& sc, const RunConfig& cfg = {});

} // namespace migrasim
