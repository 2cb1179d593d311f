#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "migrasim/time.hpp"

namespace migrasim {

// The control-task vocabulary. A migration is a small program of these tasks;
// nodes execute a received task list strictly in order, and nested
// ControlMessage / Schedule / Move* tasks are synchronous: the list suspends
// until the target acks completion (or the scheduled instant passes). That
// rule is what makes sequences like "..., ControlMessage(host, MoveState),
// Resume" well-defined.
enum class TaskKind : std::uint8_t {
    ControlMessage,
    BufferStreams,
    StopStreams,
    StartStreams, // alias on the wire: "Resume"
    Redirect,
    AddNextHop,
    RemoveNextHop,
    MoveState,
    MoveImmutableState,
    MoveIncrementalState,
    ReplicateCheckpoint,
    Schedule,
    StartQuery,
    StopQuery,
    RequestMigration,
};

// Task targets and hop arguments are written against migration roles and
// resolved per migration context at execution time. Explicit carries a
// concrete node id instead.
enum class Role : std::uint8_t { Coordinator, OldHost, NewHost, Upstream, Downstream, Explicit, None };

struct TargetSpec {
    Role role = Role::None;
    std::int32_t node = -1; // Role::Explicit only

    bool operator==(const TargetSpec&) const = default;
};

// Stream-set selectors, resolved against the migrating query.
enum class StreamSel : std::uint8_t { None, QueryInputs, QueryOutputs };

enum class FirePoint : std::uint8_t { Immediate, Takeover };

struct ControlTask {
    TaskKind kind = TaskKind::ControlMessage;
    TargetSpec target;                   // ControlMessage destination
    StreamSel streams = StreamSel::None; // stream-scoped tasks
    TargetSpec from;                     // Redirect / RemoveNextHop: hop to replace/remove
    TargetSpec to;                       // Redirect / AddNextHop / Move* / ReplicateCheckpoint destination
    FirePoint when = FirePoint::Immediate; // Takeover only inside Schedule
    bool resume_alias = false;             // serialize StartStreams as "Resume"
    std::vector<ControlTask> body;         // ControlMessage task list / Schedule inner tasks

    bool operator==(const ControlTask&) const = default;
};

// Per-variant behavior switches the program builder sets alongside the task
// tree; the runtime consults them where the task vocabulary itself is silent
// (the published programs assume these conventions).
struct MigrationBehavior {
    bool parallel_track = false;   // Move* waits for duplication markers and does not pause
    bool explicit_start = false;   // new host waits for StartStreams instead of starting on load
    bool fresh_replica_awaits_dup = false; // created replica buffers until duplication markers arrive
    bool suppress_before_takeover = false; // replica suppresses outputs owned by the old host
    bool observe_floor_from_markers = false; // replica drops windows opened before duplication began

    bool operator==(const MigrationBehavior&) const = default;
};

struct MigrationOptions {
    bool buffer_at_upstream = false; // hold tuples at the upstream instead of the new host
    std::uint64_t max_chunk_bytes = 0; // 0: ship state as one blob
    bool consistency_waiver = false;   // accept known-lossy variant/query pairings
    double takeover_margin_s = -1;     // <0: derive from control round-trips

    bool operator==(const MigrationOptions&) const = default;
};

struct MigrationContext {
    std::int32_t migration_id = -1;
    std::int32_t query = -1;
    std::int32_t coordinator = -1;
    std::int32_t old_host = -1;
    std::int32_t new_host = -1;
    std::vector<std::int32_t> upstreams;
    std::vector<std::int32_t> downstreams;
    SimTime takeover_ts = -1; // computed lazily when a Takeover task is first shipped
    MigrationOptions options;
    MigrationBehavior behavior;
};

// Serialization of task trees (round-trips exactly; unknown fields rejected).
nlohmann::json task_to_json(const ControlTask& task);
ControlTask task_from_json(const nlohmann::json& j);
nlohmann::json program_to_json(const std::vector<ControlTask>& tasks);
std::vector<ControlTask> program_from_json(const nlohmann::json& j);

const char* task_kind_name(TaskKind k);

} // namespace migrasim
