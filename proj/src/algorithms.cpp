#include "migrasim/algorithms.hpp"

#include <stdexcept>

namespace migrasim {

namespace {

constexpr const char* kNames[kVariantCount] = {
    "pause-drain-resume",
    "single-track-all-at-once",
    "single-track-partial",
    "checkpoint-assisted-single-track",
    "window-recreation",
    "state-recreation",
    "checkpoint-assisted-parallel-track",
};

TargetSpec role(Role r) {
    TargetSpec s;
    s.role = r;
    return s;
}

ControlTask cm(Role target, std::vector<ControlTask> body) {
    ControlTask t;
    t.kind = TaskKind::ControlMessage;
    t.target = role(target);
    t.body = std::move(body);
    return t;
}

ControlTask simple(TaskKind kind) {
    ControlTask t;
    t.kind = kind;
    return t;
}

ControlTask streams_task(TaskKind kind, StreamSel sel) {
    ControlTask t;
    t.kind = kind;
    t.streams = sel;
    return t;
}

ControlTask redirect() {
    ControlTask t;
    t.kind = TaskKind::Redirect;
    t.streams = StreamSel::QueryInputs;
    t.from = role(Role::OldHost);
    t.to = role(Role::NewHost);
    return t;
}

ControlTask add_next_hop() {
    ControlTask t;
    t.kind = TaskKind::AddNextHop;
    t.streams = StreamSel::QueryInputs;
    t.to = role(Role::NewHost);
    return t;
}

ControlTask remove_next_hop() {
    ControlTask t;
    t.kind = TaskKind::RemoveNextHop;
    t.streams = StreamSel::QueryInputs;
    t.to = role(Role::OldHost);
    return t;
}

ControlTask move_state(TaskKind kind) {
    ControlTask t;
    t.kind = kind;
    t.to = role(Role::NewHost);
    return t;
}

ControlTask schedule_at_takeover(std::vector<ControlTask> body) {
    ControlTask t;
    t.kind = TaskKind::Schedule;
    t.when = FirePoint::Takeover;
    t.body = std::move(body);
    return t;
}

ControlTask resume() {
    ControlTask t;
    t.kind = TaskKind::StartStreams;
    t.streams = StreamSel::QueryInputs;
    t.resume_alias = true;
    return t;
}

} // namespace

const char* variant_name(Variant v) {
    return kNames[static_cast<int>(v)];
}

std::optional<Variant> variant_from_name(std::string_view name) {
    for (int i = 0; i < kVariantCount; ++i) {
        if (name == kNames[i]) {
            return static_cast<Variant>(i);
        }
    }
    return std::nullopt;
}

const std::vector<Variant>& all_variants() {
    static const std::vector<Variant> v = {
        Variant::PauseDrainResume,
        Variant::SingleTrackAllAtOnce,
        Variant::SingleTrackPartial,
        Variant::CheckpointAssistedSingleTrack,
        Variant::WindowRecreation,
        Variant::StateRecreation,
        Variant::CheckpointAssistedParallelTrack,
    };
    return v;
}

MigrationPlan build_program(Variant v, const ProgramOptions& opts) {
    MigrationPlan plan;
    plan.variant = variant_name(v);
    plan.ctx.takeover_ts = opts.takeover_ts;
    plan.ctx.options.buffer_at_upstream = opts.buffer_at_upstream;
    plan.ctx.options.max_chunk_bytes = opts.max_chunk_bytes;
    plan.ctx.options.consistency_waiver = opts.consistency_waiver;
    plan.ctx.options.takeover_margin_s = opts.takeover_margin_s;
    MigrationBehavior& bh = plan.ctx.behavior;

    switch (v) {
    case Variant::PauseDrainResume: {
        // Start a fresh replica, rewire the inputs, stop the old replica. The
        // old host drains naturally: the stop travels behind its in-flights.
        ControlTask rewire = opts.takeover_ts >= 0
                                 ? schedule_at_takeover({redirect()})
                                 : redirect();
        plan.phases = {{cm(Role::OldHost,
                           {
                               cm(Role::NewHost, {simple(TaskKind::StartQuery)}),
                               cm(Role::Upstream, {std::move(rewire)}),
                               simple(TaskKind::StopQuery),
                           })}};
        break;
    }

    case Variant::SingleTrackAllAtOnce: {
        if (opts.buffer_at_upstream) {
            // Hold tuples at the upstreams while the whole state moves, then
            // resume over the new route.
            plan.phases = {{cm(Role::OldHost,
                               {cm(Role::Upstream,
                                   {
                                       streams_task(TaskKind::BufferStreams, StreamSel::QueryInputs),
                                       streams_task(TaskKind::StopStreams, StreamSel::QueryInputs),
                                       redirect(),
                                       cm(Role::OldHost, {move_state(TaskKind::MoveState)}),
                                       resume(),
                                   })})}};
        } else {
            // Buffer at the new host: rewire first, then move the whole state
            // behind the redirected feed.
            plan.phases = {{cm(Role::OldHost,
                               {
                                   cm(Role::NewHost,
                                      {
                                          simple(TaskKind::RequestMigration),
                                          streams_task(TaskKind::BufferStreams, StreamSel::QueryInputs),
                                          streams_task(TaskKind::StopStreams, StreamSel::QueryInputs),
                                      }),
                                   cm(Role::Upstream, {redirect()}),
                                   move_state(TaskKind::MoveState),
                                   add_next_hop(), // forward any stragglers
                               })}};
        }
        break;
    }

    case Variant::SingleTrackPartial: {
        // Ship the bulk while processing continues; only the delta since that
        // snapshot moves inside the paused window.
        plan.phases = {{cm(Role::OldHost,
                           {
                               cm(Role::NewHost,
                                  {
                                      simple(TaskKind::RequestMigration),
                                      streams_task(TaskKind::BufferStreams, StreamSel::QueryInputs),
                                      streams_task(TaskKind::StopStreams, StreamSel::QueryInputs),
                                  }),
                               move_state(TaskKind::MoveImmutableState),
                               cm(Role::Upstream, {redirect()}),
                               move_state(TaskKind::MoveIncrementalState),
                               add_next_hop(),
                           })}};
        break;
    }

    case Variant::CheckpointAssistedSingleTrack: {
        if (!opts.checkpoints_at_new_host) {
            // The replicated chain lives elsewhere, so it cannot seed the new
            // host; degrade to the partial-move shape.
            plan = build_program(Variant::SingleTrackPartial, opts);
            plan.variant = variant_name(v);
            break;
        }
        // The new host already holds the replicated chain; only the increment
        // since the last checkpoint travels. The coordinator starts the new
        // replica explicitly once the increment has applied.
        bh.explicit_start = true;
        plan.phases = {{cm(Role::Upstream,
                           {
                               cm(Role::NewHost,
                                  {
                                      streams_task(TaskKind::BufferStreams, StreamSel::QueryInputs),
                                      streams_task(TaskKind::StopStreams, StreamSel::QueryInputs),
                                  }),
                               redirect(),
                               cm(Role::OldHost,
                                  {
                                      move_state(TaskKind::MoveIncrementalState),
                                      cm(Role::NewHost,
                                         {streams_task(TaskKind::StartStreams,
                                                       StreamSel::QueryInputs)}),
                                  }),
                           })}};
        break;
    }

    case Variant::WindowRecreation: {
        // A fresh replica fills its windows from a duplicated feed; the old
        // host keeps emitting until the scheduled handover removes it.
        bh.fresh_replica_awaits_dup = true;
        bh.observe_floor_from_markers = true;
        plan.phases = {{cm(Role::Upstream,
                           {
                               cm(Role::NewHost, {simple(TaskKind::StartQuery)}),
                               cm(Role::OldHost,
                                  {cm(Role::Upstream,
                                      {
                                          schedule_at_takeover({remove_next_hop()}),
                                          add_next_hop(),
                                      })}),
                           })}};
        break;
    }

    case Variant::StateRecreation: {
        // Both replicas run on the duplicated feed; outputs are split by the
        // takeover instant, and the snapshot taken at the duplication point
        // merges into the live new replica.
        bh.parallel_track = true;
        bh.suppress_before_takeover = true;
        plan.phases = {{cm(Role::Upstream,
                           {cm(Role::OldHost,
                               {
                                   cm(Role::NewHost,
                                      {
                                          streams_task(TaskKind::StopStreams, StreamSel::QueryOutputs),
                                          simple(TaskKind::StartQuery),
                                          schedule_at_takeover({streams_task(
                                              TaskKind::StartStreams, StreamSel::QueryOutputs)}),
                                      }),
                                   cm(Role::Upstream,
                                      {
                                          schedule_at_takeover({remove_next_hop()}),
                                          add_next_hop(),
                                      }),
                                   move_state(TaskKind::MoveState),
                               })})}};
        break;
    }

    case Variant::CheckpointAssistedParallelTrack: {
        // Phase one overlays the duplicated feed and ships the increment;
        // phase two retires the old replica once the new one is live.
        bh.parallel_track = true;
        plan.phases = {
            {
                cm(Role::NewHost,
                   {
                       streams_task(TaskKind::BufferStreams, StreamSel::QueryInputs),
                       simple(TaskKind::RequestMigration),
                   }),
                cm(Role::Upstream, {add_next_hop()}),
                cm(Role::OldHost, {move_state(TaskKind::MoveIncrementalState)}),
            },
            {
                cm(Role::Upstream, {remove_next_hop()}),
                cm(Role::OldHost, {simple(TaskKind::StopQuery)}),
            },
        };
        break;
    }
    }

    if (plan.phases.empty()) {
        throw std::runtime_error("variant produced an empty program");
    }
    return plan;
}

} // namespace migrasim
