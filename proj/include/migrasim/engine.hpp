#pragma once

#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <unordered_set>
#include <vector>

#include "migrasim/metrics.hpp"
#include "migrasim/protocol.hpp"
#include "migrasim/simnet.hpp"
#include "migrasim/statemgmt.hpp"
#include "migrasim/streamcore.hpp"

namespace migrasim {

struct TopologySpec {
    std::vector<std::string> node_names;
    std::vector<LinkSpec> links;
    std::int64_t control_message_bytes = 168;
};

struct StreamDef {
    std::int32_t id = -1;
    std::string name;
    std::int32_t source_node = -1; // <0: produced by an operator
};

struct Catalog {
    std::vector<StreamDef> streams;
    std::vector<QueryDef> queries;
    std::map<std::int32_t, std::int32_t> assignment;         // query -> initial host
    std::map<std::int32_t, std::vector<std::int32_t>> sinks; // stream -> sink nodes
};

struct EngineConfig {
    std::uint64_t max_events = 100'000'000;
    bool trace = false;
    double takeover_margin_s = -1; // <0: two control round-trips
};

// A migration, ready to inject: context template plus the task program split
// into coordinator phases (phase n+1 starts when phase n's tasks have acked).
struct MigrationPlan {
    std::string variant;
    MigrationContext ctx; // old host/upstreams/downstreams resolved at trigger
    std::vector<std::vector<ControlTask>> phases;
};

struct CheckpointConfig {
    std::int32_t query = -1;
    SimTime interval = 0;
    std::int32_t target = -1;
    SimTime until = kSimTimeMax; // stop scheduling new checkpoints after this
};

struct SinkRecord {
    std::int32_t node = -1;
    Tuple tuple;
    SimTime arrival = 0;

    bool operator==(const SinkRecord&) const = default;
};

struct MigrationOutcome {
    std::int32_t id = -1;
    std::string variant;
    std::string status; // completed | aborted | incomplete
    SimTime triggered = -1;
    SimTime finished = -1;
};

struct RunResult {
    SimTime end_time = 0;
    std::vector<SinkRecord> sink_records;
    std::vector<MigrationOutcome> migrations;
};

// Static control-message count for a program: envelopes each ControlMessage
// will send plus in-band markers each routing task will emit, given how many
// of the query's input streams each executor routes. The runtime's dynamic
// count must equal this.
std::uint64_t expected_control_messages(const std::vector<std::vector<ControlTask>>& phases,
                                        const MigrationContext& ctx,
                                        const std::map<std::int32_t, int>& routed_streams_per_node);

// The event-driven runtime: hosts operators on nodes, moves tuples, executes
// control-task programs, takes checkpoints, and writes the event log. One
// instance runs one scenario once.
class Simulation {
  public:
    Simulation(TopologySpec topo, Catalog catalog, EngineConfig cfg);
    ~Simulation();

    Simulation(const Simulation&) = delete;
    Simulation& operator=(const Simulation&) = delete;

    EventQueue& queue();
    EventLog& log();
    SimTime now() const;
    const Catalog& catalog() const;

    // Emits one tuple on a source stream at the current instant.
    void emit_tuple(std::int32_t stream, std::int64_t key, std::uint32_t payload_bytes);

    void add_event(SimTime at, std::function<void()> fn);

    void configure_checkpoints(const CheckpointConfig& cfg);
    void trigger_migration_at(SimTime at, MigrationPlan plan);
    void trigger_migration_now(MigrationPlan plan);

    // Introspection (decision daemon, tests).
    std::int32_t query_host(std::int32_t query) const;
    bool query_in_migration(std::int32_t query) const;
    std::uint64_t query_state_bytes(std::int32_t query) const;
    double input_rate_estimate(std::int32_t query) const; // tuples/s, exponential decay
    double selectivity_estimate(std::int32_t query) const;
    std::uint64_t expected_control_for(const MigrationPlan& plan, std::int32_t old_host) const;

    RunResult run();

  private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace migrasim
