#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "migrasim/algorithms.hpp"
#include "migrasim/workload.hpp"

namespace migrasim {

// Scenario validation failures carry the offending field path; the CLI maps
// them to exit code 2.
class ScenarioError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

struct LinkDecl {
    std::string a;
    std::string b;
    std::int64_t bandwidth_bps = 0;
    double latency_s = 0;
};

struct StreamDecl {
    std::string name;
    std::string source; // node name; empty for operator outputs
};

struct WindowDecl {
    double extent_s = 0;
    double slide_s = 0; // 0: tumbling (slide == extent)
};

struct QueryDecl {
    std::string name;
    std::string kind; // "filter" | "join" | "aggregate"
    std::vector<std::string> inputs;
    std::string output;
    std::string host;
    WindowDecl window;
    std::int64_t pass_every = 1;
};

struct SinkDecl {
    std::string stream;
    std::string node;
};

struct SourceDecl {
    std::string stream;
    std::vector<WorkloadPhase> phases;
    std::vector<Emission> extra;
};

struct CheckpointDecl {
    std::string query;
    double interval_s = 0;
    std::string target;
    double until_s = -1; // <0: whole run
};

struct MigrationDecl {
    double at_s = 0;
    std::string variant;
    std::string query;
    std::string to;
    std::string coordinator;
    bool buffer_at_upstream = false;
    std::uint64_t max_chunk_bytes = 0;
    double takeover_margin_s = -1;
    double takeover_at_s = -1;          // preset takeover instant
    bool takeover_at_boundary = false;  // snap the preset to the next window edge
    double boundary_lead_s = 2.0;       // min gap between trigger and the edge
    bool consistency_waiver = false;
};

// Periodic placement checks: per-candidate score series are replayed check by
// check; the cost-aware policy triggers a migration when a rival host wins.
struct DecisionDecl {
    double start_s = 0;
    double period_s = 0;
    int checks = 0;
    std::string query;
    std::string coordinator;
    std::string variant = "single-track-all-at-once";
    int max_migrations = 1;
    double min_adaptation_s = 5;
    double max_adaptation_s = 15;
    double cost_weight = 1.0;
    std::map<std::string, std::vector<double>> scores; // host -> series (last repeats)
};

struct Scenario {
    std::string name = "scenario";
    std::uint64_t seed = 1;
    std::int64_t control_message_bytes = 168;
    std::uint64_t max_events = 100'000'000;
    std::vector<std::string> nodes;
    std::vector<LinkDecl> links;
    std::vector<StreamDecl> streams;
    std::vector<QueryDecl> queries;
    std::vector<SinkDecl> sinks;
    std::vector<SourceDecl> workload;
    std::vector<CheckpointDecl> checkpoints;
    std::vector<MigrationDecl> migrations;
    std::optional<DecisionDecl> decision;
};

// Parses and validates "migrasim-scenario/1" documents. Unknown fields and
// dangling names are rejected with the field path in the message.
Scenario scenario_from_json_text(const std::string& text);
std::string scenario_to_json_text(const Scenario& sc);

// Cross-checks name references, window shapes, and variant names; throws
// ScenarioError. Called by the parser and by programmatic users.
void validate_scenario(const Scenario& sc);

} // namespace migrasim
