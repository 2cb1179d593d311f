#pragma once

#include <optional>
#include <string_view>

#include "migrasim/engine.hpp"
#include "migrasim/protocol.hpp"

namespace migrasim {

// The seven migration strategies, each expressed as a control-task program
// plus the behavior switches its conventions assume.
enum class Variant {
    PauseDrainResume,
    SingleTrackAllAtOnce,
    SingleTrackPartial,
    CheckpointAssistedSingleTrack,
    WindowRecreation,
    StateRecreation,
    CheckpointAssistedParallelTrack,
};

inline constexpr int kVariantCount = 7;

const char* variant_name(Variant v);
std::optional<Variant> variant_from_name(std::string_view name);
const std::vector<Variant>& all_variants();

struct ProgramOptions {
    bool buffer_at_upstream = false;      // all-at-once: hold tuples at the upstreams
    bool checkpoints_at_new_host = true;  // checkpoint-assisted single-track: increments
                                          // apply only if the chain already lives on the
                                          // new host; otherwise fall back to a full move
    std::uint64_t max_chunk_bytes = 0;
    double takeover_margin_s = -1;
    SimTime takeover_ts = -1; // preset takeover instant (boundary-aligned handovers)
    bool consistency_waiver = false;
};

// Builds the program for a variant. The context template carries options and
// behavior; query, coordinator, and new host still need filling in before the
// plan is triggered.
MigrationPlan build_program(Variant v, const ProgramOptions& opts = {});

} // namespace migrasim
