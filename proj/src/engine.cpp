#include "migrasim/engine.hpp"

#include <algorithm>
#include <cassert>
#include <stdexcept>
#include <unordered_map>

#include "migrasim/decision.hpp"

namespace migrasim {

namespace {

enum class MarkerKind : std::uint8_t {
    RedirectCut, // stream rerouted away from the receiver (old hop)
    RemoveCut,   // receiver removed as a hop
    DupBegin,    // receiver (new hop) starts getting a duplicated feed
    DupNotice,   // old hop is told the duplicated feed has started
};

struct MarkerInfo {
    MarkerKind kind = MarkerKind::RedirectCut;
    std::int32_t mig = -1;
    std::int32_t query = -1;
    std::int32_t stream = -1;
    SimTime cut = -1; // cuts: takeover ts (-1 = positional); dup: last sent event ts
};

struct CtrlPayload {
    std::int32_t mig = -1;
    const ControlTask* cm = nullptr;
    std::uint64_t env_uid = 0;
    std::int32_t sender = -1;
};

struct BlobPayload {
    std::shared_ptr<const StateBlob> blob;
    std::int32_t mig = -1;
    std::int32_t query = -1;
    bool replication = false;
    bool final_piece = false; // last version of this transfer: load after assembly
    std::uint64_t move_uid = 0;
    std::int32_t sender = -1;
};

bool tasks_move_state(const std::vector<ControlTask>& tasks) {
    for (const auto& t : tasks) {
        if (t.kind == TaskKind::MoveState || t.kind == TaskKind::MoveIncrementalState ||
            t.kind == TaskKind::MoveImmutableState) {
            return true;
        }
        if (tasks_move_state(t.body)) {
            return true;
        }
    }
    return false;
}

std::vector<std::int32_t> resolve_targets(const TargetSpec& spec, const MigrationContext& ctx) {
    switch (spec.role) {
    case Role::Coordinator:
        return {ctx.coordinator};
    case Role::OldHost:
        return {ctx.old_host};
    case Role::NewHost:
        return {ctx.new_host};
    case Role::Upstream:
        return ctx.upstreams;
    case Role::Downstream:
        return ctx.downstreams;
    case Role::Explicit:
        return {spec.node};
    case Role::None:
        break;
    }
    throw std::runtime_error("control task has no resolvable target");
}

std::int32_t resolve_single(const TargetSpec& spec, const MigrationContext& ctx) {
    auto v = resolve_targets(spec, ctx);
    if (v.size() != 1) {
        throw std::runtime_error("expected a single-node target");
    }
    return v[0];
}

} // namespace

// ---------------------------------------------------------------------------
// Static control-message count.

namespace {

std::uint64_t count_walk(const std::vector<ControlTask>& tasks,
                         const std::vector<std::int32_t>& executors, const MigrationContext& ctx,
                         const std::map<std::int32_t, int>& routed) {
    std::uint64_t total = 0;
    auto routed_at = [&](std::int32_t node) -> std::uint64_t {
        auto it = routed.find(node);
        return it == routed.end() ? 0 : static_cast<std::uint64_t>(it->second);
    };
    for (const auto& t : tasks) {
        switch (t.kind) {
        case TaskKind::ControlMessage: {
            auto targets = resolve_targets(t.target, ctx);
            std::sort(targets.begin(), targets.end());
            targets.erase(std::unique(targets.begin(), targets.end()), targets.end());
            for (std::int32_t e : executors) {
                for (std::int32_t tgt : targets) {
                    if (tgt != e) {
                        ++total; // one envelope on the wire
                    }
                }
            }
            total += count_walk(t.body, targets, ctx, routed);
            break;
        }
        case TaskKind::Schedule:
            total += count_walk(t.body, executors, ctx, routed);
            break;
        case TaskKind::Redirect:
        case TaskKind::RemoveNextHop:
            for (std::int32_t e : executors) {
                total += routed_at(e); // one cut marker per rerouted stream
            }
            break;
        case TaskKind::AddNextHop:
            for (std::int32_t e : executors) {
                total += 2 * routed_at(e); // duplication begin + notice markers
            }
            break;
        default:
            break;
        }
    }
    return total;
}

} // namespace

std::uint64_t expected_control_messages(const std::vector<std::vector<ControlTask>>& phases,
                                        const MigrationContext& ctx,
                                        const std::map<std::int32_t, int>& routed_streams_per_node) {
    std::uint64_t total = 0;
    for (const auto& phase : phases) {
        total += count_walk(phase, {ctx.coordinator}, ctx, routed_streams_per_node);
    }
    return total;
}

// ---------------------------------------------------------------------------
// Impl

struct Simulation::Impl {
    // --- static configuration -------------------------------------------------
    TopologySpec topo;
    Catalog cat;
    EngineConfig cfg;

    EventQueue q;
    Network net;
    EventLog elog;

    std::map<std::int32_t, const QueryDef*> query_by_id;
    std::map<std::int32_t, const StreamDef*> stream_by_id;
    std::map<std::int32_t, std::vector<std::int32_t>> consumers_of_stream; // stream -> query ids
    std::set<std::pair<std::int32_t, std::int32_t>> sink_bindings;         // (node, stream)

    // --- runtime state --------------------------------------------------------
    enum class Phase { Pending, AwaitDup, Loaded, Running, Paused, Released };

    struct Replica {
        std::unique_ptr<Operator> op;
        Phase phase = Phase::Pending;
        std::int32_t mig = -1; // migration that created it; -1 for initial placement
        bool auto_start = true;
        std::int32_t forward_to = -1;
        std::uint64_t last_shipped = 0; // mark covered by checkpoints/partial transfers
        bool buffer_armed = false;
        std::deque<Tuple> buffer;
        std::uint64_t buffer_bytes = 0;
        std::set<std::int32_t> dup_seen;
        SimTime dup_floor = -1;
    };

    struct PendingCut {
        SimTime at = -1;
        std::int32_t mig = -1;
        std::int32_t remove_hop = -1;
        std::int32_t add_hop = -1;
    };

    struct StreamRoute {
        std::vector<std::int32_t> hops;
        std::optional<PendingCut> pending;
        SimTime last_sent_ts = -1;
    };

    struct Hold { // outgoing buffer at an upstream router
        std::int32_t mig = -1;
        std::int32_t query = -1;
        std::set<std::int32_t> streams;
        std::vector<Tuple> held;
        std::uint64_t bytes = 0;
    };

    struct CmStatus {
        bool done = false;
        std::uint64_t frame = 0;
        std::vector<std::pair<std::int32_t, std::uint64_t>> waiters; // (reply node, env uid)
    };

    struct InboundState {
        std::int32_t mig = -1;
        Checkpoint chain;
        bool seeded = false;
        std::map<std::uint64_t, std::vector<StateBlob>> partial; // version -> chunks so far
    };

    struct NodeState {
        std::map<std::int32_t, StreamRoute> routes;
        std::map<std::int32_t, Replica> replicas; // query -> replica
        std::vector<Hold> holds;
        std::map<std::pair<std::int32_t, std::int32_t>, MarkerInfo> markers; // (mig, stream)
        std::map<std::int32_t, std::set<std::int32_t>> cut_streams;          // mig -> streams
        std::map<std::int32_t, std::set<std::int32_t>> removed_streams;      // mig -> streams
        std::map<std::int32_t, std::set<std::int32_t>> notice_streams;       // mig -> streams
        std::map<std::int32_t, StateBlob> stash; // mig -> state extracted at dup notice
        std::map<std::pair<std::int32_t, const ControlTask*>, CmStatus> cm_status;
        std::map<std::int32_t, Checkpoint> stored_checkpoints; // query -> replicated chain
        std::map<std::int32_t, InboundState> inbound;          // query -> incoming transfer
        std::set<std::int32_t> warned_streams;
    };

    struct Frame {
        std::uint64_t uid = 0;
        std::int32_t mig = -1;
        std::int32_t node = -1;
        const std::vector<ControlTask>* tasks = nullptr;
        std::size_t idx = 0;
        std::int32_t reply_node = -1; // -1: root frame
        std::uint64_t reply_env = 0;
        const ControlTask* cm = nullptr; // occurrence identity for dedup; null for roots
        enum class Wait { None, ChildAcks, MoveAck, CutMarkers, NoticeMarkers } wait = Wait::None;
        std::set<std::uint64_t> pending_acks;
        std::uint64_t move_uid = 0;
    };

    struct MigrationRec {
        std::int32_t id = -1;
        MigrationPlan plan;
        std::shared_ptr<MigrationContext> ctx;
        std::size_t phase = 0;
        bool root_done = false;
        int pending_timers = 0;
        bool moves_state = false;
        std::string status = "running";
        SimTime triggered = -1;
        SimTime finished = -1;
        std::set<std::uint64_t> frames;
    };

    std::vector<NodeState> nodes;
    std::map<std::int32_t, std::int32_t> assignment;
    std::set<std::int32_t> migrating_queries;
    std::map<std::int32_t, std::uint64_t> stream_seq;
    std::map<std::pair<std::int32_t, std::int32_t>, std::unordered_set<std::uint64_t>> sink_seen;
    std::vector<SinkRecord> sink_records;
    std::map<std::uint64_t, Frame> frames;
    std::map<std::int32_t, MigrationRec> migrations;
    std::uint64_t next_uid = 1;
    std::int32_t next_mig_id = 1;
    int active_migrations = 0;
    std::map<std::int32_t, EwmaRate> rate_est;
    std::map<std::int32_t, std::pair<std::uint64_t, std::uint64_t>> sel_counts; // q -> (in, out)
    std::vector<CheckpointConfig> ckpt_cfgs;
    bool ran = false;

    Impl(TopologySpec t, Catalog c, EngineConfig e)
        : topo(std::move(t)), cat(std::move(c)), cfg(e), net(q) {
        if (topo.node_names.empty()) {
            throw std::runtime_error("topology needs at least one node");
        }
        nodes.resize(topo.node_names.size());
        for (const auto& l : topo.links) {
            net.add_link(l);
        }
        for (const auto& s : cat.streams) {
            if (!stream_by_id.emplace(s.id, &s).second) {
                throw std::runtime_error("duplicate stream id in catalog");
            }
        }
        for (const auto& qd : cat.queries) {
            if (!query_by_id.emplace(qd.id, &qd).second) {
                throw std::runtime_error("duplicate query id in catalog");
            }
            for (std::int32_t in : qd.input_streams) {
                if (!stream_by_id.count(in)) {
                    throw std::runtime_error("query consumes unknown stream");
                }
                auto& cons = consumers_of_stream[in];
                if (!cons.empty()) {
                    throw std::runtime_error("a stream may feed only one query");
                }
                cons.push_back(qd.id);
            }
            if (!cat.assignment.count(qd.id)) {
                throw std::runtime_error("query has no host assignment");
            }
        }
        for (const auto& [stream, sinks] : cat.sinks) {
            if (!stream_by_id.count(stream)) {
                throw std::runtime_error("sink binds unknown stream");
            }
            for (std::int32_t n : sinks) {
                check_node(n);
                sink_bindings.emplace(n, stream);
            }
        }
        assignment = cat.assignment;
        init_placement();
    }

    void check_node(std::int32_t n) const {
        if (n < 0 || static_cast<std::size_t>(n) >= nodes.size()) {
            throw std::runtime_error("node id out of range");
        }
    }

    const QueryDef& qdef(std::int32_t q) const {
        auto it = query_by_id.find(q);
        if (it == query_by_id.end()) {
            throw std::runtime_error("unknown query id");
        }
        return *it->second;
    }

    // Producer of a stream right now: its source node, or the current host of
    // the query emitting it.
    std::int32_t producer_node(std::int32_t stream) const {
        auto it = stream_by_id.find(stream);
        if (it == stream_by_id.end()) {
            throw std::runtime_error("unknown stream id");
        }
        if (it->second->source_node >= 0) {
            return it->second->source_node;
        }
        for (const auto& qd : cat.queries) {
            if (qd.output_stream == stream) {
                return assignment.at(qd.id);
            }
        }
        throw std::runtime_error("stream has neither source nor producing query");
    }

    std::vector<std::int32_t> consumer_nodes(std::int32_t stream) const {
        std::vector<std::int32_t> out;
        auto it = consumers_of_stream.find(stream);
        if (it != consumers_of_stream.end()) {
            for (std::int32_t qid : it->second) {
                out.push_back(assignment.at(qid));
            }
        }
        auto sk = cat.sinks.find(stream);
        if (sk != cat.sinks.end()) {
            out.insert(out.end(), sk->second.begin(), sk->second.end());
        }
        std::sort(out.begin(), out.end());
        out.erase(std::unique(out.begin(), out.end()), out.end());
        return out;
    }

    void init_placement() {
        // Source streams routed at their sources; query outputs at their hosts.
        for (const auto& s : cat.streams) {
            if (s.source_node >= 0) {
                check_node(s.source_node);
                nodes[s.source_node].routes[s.id].hops = consumer_nodes(s.id);
            }
        }
        for (const auto& qd : cat.queries) {
            const std::int32_t host = assignment.at(qd.id);
            check_node(host);
            auto& rep = nodes[host].replicas[qd.id];
            rep.op = std::make_unique<Operator>(qd);
            rep.phase = Phase::Running;
            rep.mig = -1;
            log(LogKind::OpCreated, host, -1, qd.id);
            log(LogKind::OpStarted, host, -1, qd.id);
            nodes[host].routes[qd.output_stream].hops = consumer_nodes(qd.output_stream);
        }
    }

    // --- logging helpers ------------------------------------------------------

    SimTime now() const { return q.now(); }

    void log(LogKind k, std::int32_t node, std::int32_t mig, std::int32_t query,
             std::int32_t stream = -1, std::uint64_t a = 0, std::uint64_t b = 0) {
        elog.record(LogEntry{now(), k, node, mig, query, stream, a, b});
    }

    // --- wire helpers -----------------------------------------------------

    std::int64_t ctrl_bytes() const { return topo.control_message_bytes; }

    bool send_ctrl(std::int32_t from, std::int32_t to, CtrlPayload p) {
        log(LogKind::CtrlSent, from, p.mig, -1, -1, p.env_uid);
        auto arrival = net.send(from, to, static_cast<std::uint64_t>(ctrl_bytes()), 0,
                                [this, to, p](int, std::uint64_t) { on_ctrl(to, p); });
        return arrival >= 0;
    }

    void send_ack(std::int32_t from, std::int32_t to, std::int32_t mig, std::uint64_t env_uid) {
        if (from == to) {
            on_ack(to, mig, env_uid);
            return;
        }
        log(LogKind::AckSent, from, mig, -1, -1, env_uid);
        auto arrival =
            net.send(from, to, static_cast<std::uint64_t>(ctrl_bytes()), 0,
                     [this, to, mig, env_uid](int, std::uint64_t) { on_ack(to, mig, env_uid); });
        if (arrival < 0) {
            abort_migration(mig, "acknowledgement unroutable");
        }
    }

    void send_move_ack(std::int32_t from, std::int32_t to, std::int32_t mig,
                       std::uint64_t move_uid) {
        log(LogKind::AckSent, from, mig, -1, -1, move_uid);
        auto arrival = net.send(from, to, static_cast<std::uint64_t>(ctrl_bytes()), 0,
                                [this, to, mig, move_uid](int, std::uint64_t) {
                                    on_move_ack(to, mig, move_uid);
                                });
        if (arrival < 0) {
            abort_migration(mig, "state acknowledgement unroutable");
        }
    }

    bool send_marker(std::int32_t from, std::int32_t to, MarkerInfo m) {
        log(LogKind::MarkerSent, from, m.mig, m.query, m.stream, static_cast<std::uint64_t>(m.kind));
        auto arrival = net.send(from, to, static_cast<std::uint64_t>(ctrl_bytes()), 0,
                                [this, to, m](int, std::uint64_t) { on_marker(to, m); });
        return arrival >= 0;
    }

    // Ships a blob, split into chunks when the migration asks for it. Returns
    // false if the link is missing.
    bool send_blob(std::int32_t from, std::int32_t to, StateBlob blob, std::int32_t mig,
                   std::int32_t query, bool replication, bool final_piece, std::uint64_t move_uid,
                   std::uint64_t max_chunk_bytes) {
        std::vector<StateBlob> pieces;
        if (max_chunk_bytes > 0 && blob.bytes() > max_chunk_bytes) {
            pieces = partition_state(blob, max_chunk_bytes);
        } else {
            blob.chunk_index = 0;
            blob.chunk_count = 1;
            pieces.push_back(std::move(blob));
        }
        for (auto& piece : pieces) {
            const std::uint64_t bytes = piece.bytes();
            log(LogKind::BlobSent, from, mig, query, -1, bytes, replication ? 1 : 0);
            BlobPayload p;
            p.blob = std::make_shared<const StateBlob>(std::move(piece));
            p.mig = mig;
            p.query = query;
            p.replication = replication;
            p.final_piece = final_piece;
            p.move_uid = move_uid;
            p.sender = from;
            auto arrival = net.send(from, to, bytes, 0,
                                    [this, to, p](int, std::uint64_t) { on_blob(to, p); });
            if (arrival < 0) {
                return false;
            }
        }
        return true;
    }

    // --- data plane -------------------------------------------------------

    void emit_tuple(std::int32_t stream, std::int64_t key, std::uint32_t payload_bytes) {
        auto it = stream_by_id.find(stream);
        if (it == stream_by_id.end() || it->second->source_node < 0) {
            throw std::runtime_error("emit_tuple needs a source stream");
        }
        Tuple t;
        t.stream = stream;
        t.key = key;
        t.ts = now();
        t.seq = ++stream_seq[stream];
        t.payload_bytes = payload_bytes;
        ++elog.counters().tuples_emitted;
        route_and_send(it->second->source_node, t);
    }

    std::vector<std::int32_t> active_hops(const StreamRoute& r, SimTime ts) const {
        std::vector<std::int32_t> hops = r.hops;
        if (r.pending && ts >= r.pending->at) {
            if (r.pending->remove_hop >= 0) {
                hops.erase(std::remove(hops.begin(), hops.end(), r.pending->remove_hop),
                           hops.end());
            }
            if (r.pending->add_hop >= 0 &&
                std::find(hops.begin(), hops.end(), r.pending->add_hop) == hops.end()) {
                hops.push_back(r.pending->add_hop);
            }
        }
        return hops;
    }

    void route_and_send(std::int32_t node, const Tuple& t) {
        NodeState& ns = nodes[node];
        for (auto& h : ns.holds) {
            if (h.streams.count(t.stream)) {
                h.held.push_back(t);
                h.bytes += tuple_wire_bytes(t);
                ++elog.counters().buffered_tuples;
                elog.counters().bytes_buffered += tuple_wire_bytes(t);
                return;
            }
        }
        auto it = ns.routes.find(t.stream);
        if (it == ns.routes.end()) {
            drop_unroutable(node, t);
            return;
        }
        auto hops = active_hops(it->second, t.ts);
        if (hops.empty()) {
            drop_unroutable(node, t);
            return;
        }
        bool first = true;
        for (std::int32_t hop : hops) {
            send_data(node, hop, t, !first);
            first = false;
        }
        it->second.last_sent_ts = std::max(it->second.last_sent_ts, t.ts);
    }

    void drop_unroutable(std::int32_t node, const Tuple& t) {
        ++elog.counters().dropped_tuples;
        if (nodes[node].warned_streams.insert(t.stream).second) {
            log(LogKind::Warning, node, -1, -1, t.stream, 1);
        }
    }

    void send_data(std::int32_t from, std::int32_t to, const Tuple& t, bool duplicate) {
        const std::uint64_t wire = tuple_wire_bytes(t);
        auto& c = elog.counters();
        ++c.tuple_sends;
        c.bytes_sent += wire;
        if (duplicate) {
            ++c.duplicate_sends;
            c.bytes_duplicated += wire;
        }
        auto arrival = net.send(from, to, wire, 0,
                                [this, to, t](int, std::uint64_t) { on_data(to, t); });
        if (arrival < 0) {
            ++c.dropped_tuples;
            if (nodes[from].warned_streams.insert(t.stream).second) {
                log(LogKind::Warning, from, -1, -1, t.stream, 2);
            }
        }
    }

    void on_data(std::int32_t node, const Tuple& t) {
        if (active_migrations > 0) {
            elog.record_arrival(ArrivalEntry{now(), node, t.stream, t.seq});
        }
        NodeState& ns = nodes[node];
        // Dispatch to a hosted replica consuming this stream, if any.
        auto cons = consumers_of_stream.find(t.stream);
        if (cons != consumers_of_stream.end()) {
            for (std::int32_t qid : cons->second) {
                auto rit = ns.replicas.find(qid);
                if (rit == ns.replicas.end()) {
                    continue;
                }
                dispatch_to_replica(node, qid, rit->second, t);
                return;
            }
        }
        if (sink_bindings.count({node, t.stream})) {
            accept_at_sink(node, t);
            return;
        }
        ++elog.counters().dropped_tuples;
        log(LogKind::DataDropped, node, -1, -1, t.stream, t.seq);
    }

    void dispatch_to_replica(std::int32_t node, std::int32_t qid, Replica& rep, const Tuple& t) {
        switch (rep.phase) {
        case Phase::Running:
            process_tuple(node, qid, rep, t);
            return;
        case Phase::Pending:
        case Phase::AwaitDup:
        case Phase::Loaded:
            rep.buffer.push_back(t);
            rep.buffer_bytes += tuple_wire_bytes(t);
            ++elog.counters().buffered_tuples;
            elog.counters().bytes_buffered += tuple_wire_bytes(t);
            return;
        case Phase::Paused:
            if (rep.forward_to >= 0) {
                ++elog.counters().forwarded_tuples;
                send_data(node, rep.forward_to, t, false);
            } else {
                ++elog.counters().dropped_tuples;
                log(LogKind::DataDropped, node, rep.mig, qid, t.stream, t.seq);
            }
            return;
        case Phase::Released:
            ++elog.counters().dropped_tuples;
            log(LogKind::DataDropped, node, rep.mig, qid, t.stream, t.seq);
            return;
        }
    }

    void process_tuple(std::int32_t node, std::int32_t qid, Replica& rep, const Tuple& t) {
        rate_est.try_emplace(qid).first->second.observe(now());
        auto& sc = sel_counts[qid];
        ++sc.first;
        std::vector<Tuple> outs;
        if (!rep.op->process(t, outs)) {
            ++elog.counters().covered_drops;
        }
        rep.op->advance_watermark(t.ts, outs);
        sc.second += outs.size();
        for (const auto& out : outs) {
            route_and_send(node, out);
        }
    }

    void accept_at_sink(std::int32_t node, const Tuple& t) {
        auto& seen = sink_seen[{node, t.stream}];
        if (!seen.insert(t.seq).second) {
            ++elog.counters().sink_duplicates;
            return;
        }
        sink_records.push_back(SinkRecord{node, t, now()});
        if (cfg.trace) {
            log(LogKind::TraceTuple, node, -1, -1, t.stream, t.seq,
                static_cast<std::uint64_t>(t.key));
        }
    }

    // --- control plane ------------------------------------------------------

    MigrationRec& rec_of(std::int32_t mig) {
        auto it = migrations.find(mig);
        if (it == migrations.end()) {
            throw std::runtime_error("unknown migration id");
        }
        return it->second;
    }

    void on_ctrl(std::int32_t node, const CtrlPayload& p) {
        log(LogKind::CtrlDelivered, node, p.mig, -1, -1, p.env_uid);
        auto& rec = rec_of(p.mig);
        NodeState& ns = nodes[node];
        auto& st = ns.cm_status[{p.mig, p.cm}];
        if (rec.status != "running" || st.done) {
            // Late or repeated instruction: acknowledge, do not re-execute.
            send_ack(node, p.sender, p.mig, p.env_uid);
            return;
        }
        if (st.frame != 0) {
            st.waiters.emplace_back(p.sender, p.env_uid);
            return;
        }
        spawn_frame(node, p.mig, &p.cm->body, p.sender, p.env_uid, p.cm);
    }

    void spawn_frame(std::int32_t node, std::int32_t mig, const std::vector<ControlTask>* tasks,
                     std::int32_t reply_node, std::uint64_t reply_env, const ControlTask* cm) {
        Frame f;
        f.uid = next_uid++;
        f.mig = mig;
        f.node = node;
        f.tasks = tasks;
        f.reply_node = reply_node;
        f.reply_env = reply_env;
        f.cm = cm;
        auto& rec = rec_of(mig);
        rec.frames.insert(f.uid);
        if (cm) {
            nodes[node].cm_status[{mig, cm}].frame = f.uid;
        }
        const std::uint64_t uid = f.uid;
        frames.emplace(uid, std::move(f));
        step_frame(uid);
    }

    void on_ack(std::int32_t node, std::int32_t mig, std::uint64_t env_uid) {
        log(LogKind::AckDelivered, node, mig, -1, -1, env_uid);
        for (auto& [uid, f] : frames) {
            if (f.node != node || f.mig != mig) {
                continue;
            }
            auto it = f.pending_acks.find(env_uid);
            if (it == f.pending_acks.end()) {
                continue;
            }
            f.pending_acks.erase(it);
            if (f.pending_acks.empty() && f.wait == Frame::Wait::ChildAcks) {
                f.wait = Frame::Wait::None;
                ++f.idx;
                step_frame(uid);
            }
            return;
        }
    }

    void on_move_ack(std::int32_t node, std::int32_t mig, std::uint64_t move_uid) {
        log(LogKind::AckDelivered, node, mig, -1, -1, move_uid);
        for (auto& [uid, f] : frames) {
            if (f.node == node && f.mig == mig && f.wait == Frame::Wait::MoveAck &&
                f.move_uid == move_uid) {
                f.wait = Frame::Wait::None;
                ++f.idx;
                step_frame(uid);
                return;
            }
        }
    }

    void on_marker(std::int32_t node, const MarkerInfo& m) {
        log(LogKind::MarkerDelivered, node, m.mig, m.query, m.stream,
            static_cast<std::uint64_t>(m.kind));
        NodeState& ns = nodes[node];
        ns.markers[{m.mig, m.stream}] = m;
        auto mig_it = migrations.find(m.mig);
        const bool mig_running = mig_it != migrations.end() && mig_it->second.status == "running";
        switch (m.kind) {
        case MarkerKind::RedirectCut:
        case MarkerKind::RemoveCut: {
            ns.cut_streams[m.mig].insert(m.stream);
            auto rit = ns.replicas.find(m.query);
            if (rit != ns.replicas.end() && mig_running) {
                Replica& rep = rit->second;
                // A value cut carries the takeover instant: emit everything the
                // old replica owes up to it before it goes quiet.
                if (m.cut >= 0 && (rep.phase == Phase::Running || rep.phase == Phase::Paused)) {
                    flush_watermark(node, m.query, rep, m.cut);
                }
                if (m.kind == MarkerKind::RemoveCut) {
                    auto& removed = ns.removed_streams[m.mig];
                    removed.insert(m.stream);
                    if (covers_inputs(removed, m.query)) {
                        release_replica(node, m.query, m.mig);
                    }
                }
            }
            break;
        }
        case MarkerKind::DupBegin: {
            auto rit = ns.replicas.find(m.query);
            if (rit != ns.replicas.end() && rit->second.phase == Phase::AwaitDup && mig_running) {
                Replica& rep = rit->second;
                rep.dup_seen.insert(m.stream);
                rep.dup_floor = std::max(rep.dup_floor, m.cut);
                if (covers_inputs(rep.dup_seen, m.query)) {
                    ReplicaRules rules = rep.op->rules();
                    rules.observe_floor = rep.dup_floor + 1;
                    rep.op->set_rules(rules);
                    start_replica(node, m.query, rep);
                }
            }
            break;
        }
        case MarkerKind::DupNotice: {
            ns.notice_streams[m.mig].insert(m.stream);
            maybe_stash_state(node, m.mig, m.query);
            break;
        }
        }
        wake_marker_waiters(node, m.mig);
    }

    bool covers_inputs(const std::set<std::int32_t>& streams, std::int32_t qid) const {
        for (std::int32_t s : qdef(qid).input_streams) {
            if (!streams.count(s)) {
                return false;
            }
        }
        return true;
    }

    void flush_watermark(std::int32_t node, std::int32_t qid, Replica& rep, SimTime wm) {
        std::vector<Tuple> outs;
        rep.op->advance_watermark(wm, outs);
        auto& sc = sel_counts[qid];
        sc.second += outs.size();
        for (const auto& out : outs) {
            route_and_send(node, out);
        }
    }

    // Parallel-track migrations snapshot the old replica the moment the
    // duplicate feed provably covers everything newer: right when the last
    // duplication notice arrives. Anything extracted here plus the duplicated
    // stream is exactly the whole input, with no overlap.
    // An incremental transfer is only usable when the receiving host already
    // holds a replicated chain ending exactly at the sender's last-shipped
    // version; anything else must travel as a self-contained snapshot.
    std::uint64_t incremental_base(std::int32_t target, std::int32_t qid,
                                   const Replica& rep) const {
        if (rep.last_shipped == 0) {
            return 0;
        }
        const NodeState& tn = nodes.at(target);
        // A base shipped earlier by this same migration (partial moves)...
        auto ib = tn.inbound.find(qid);
        if (ib != tn.inbound.end() && !ib->second.chain.empty() &&
            ib->second.chain.version() == rep.last_shipped) {
            return rep.last_shipped;
        }
        // ...or a replicated checkpoint chain (checkpoint-assisted moves).
        auto it = tn.stored_checkpoints.find(qid);
        if (it != tn.stored_checkpoints.end() && !it->second.empty() &&
            it->second.version() == rep.last_shipped) {
            return rep.last_shipped;
        }
        return 0;
    }

    void maybe_stash_state(std::int32_t node, std::int32_t mig, std::int32_t qid) {
        auto mig_it = migrations.find(mig);
        if (mig_it == migrations.end() || mig_it->second.status != "running") {
            return;
        }
        MigrationRec& rec = mig_it->second;
        if (!rec.moves_state || !rec.ctx->behavior.parallel_track) {
            return;
        }
        NodeState& ns = nodes[node];
        if (ns.stash.count(mig) || !covers_inputs(ns.notice_streams[mig], qid)) {
            return;
        }
        auto rit = ns.replicas.find(qid);
        if (rit == ns.replicas.end() || !rit->second.op) {
            return;
        }
        Replica& rep = rit->second;
        ns.stash.emplace(mig,
                         rep.op->extract(incremental_base(rec.ctx->new_host, qid, rep)));
        rep.last_shipped = rep.op->mark();
    }

    void wake_marker_waiters(std::int32_t node, std::int32_t mig) {
        std::vector<std::uint64_t> ready;
        for (auto& [uid, f] : frames) {
            if (f.node != node || f.mig != mig) {
                continue;
            }
            if (f.wait == Frame::Wait::CutMarkers || f.wait == Frame::Wait::NoticeMarkers) {
                ready.push_back(uid);
            }
        }
        for (std::uint64_t uid : ready) {
            auto it = frames.find(uid);
            if (it == frames.end()) {
                continue;
            }
            it->second.wait = Frame::Wait::None;
            step_frame(uid); // the task re-checks its marker condition itself
        }
    }

    void release_replica(std::int32_t node, std::int32_t qid, std::int32_t mig) {
        auto rit = nodes[node].replicas.find(qid);
        if (rit == nodes[node].replicas.end()) {
            return;
        }
        Replica& rep = rit->second;
        if (rep.phase == Phase::Released) {
            return;
        }
        if (rep.phase == Phase::Running || rep.phase == Phase::Loaded) {
            log(LogKind::OpStopped, node, mig, qid, -1, 1);
        }
        fold_op_counters(rep);
        rep.op.reset();
        rep.phase = Phase::Released;
        rep.mig = mig;
        nodes[node].routes.erase(qdef(qid).output_stream);
    }

    void fold_op_counters(Replica& rep) {
        if (!rep.op) {
            return;
        }
        auto& c = elog.counters();
        c.late_drops += rep.op->late_drops();
        c.suppressed_outputs += rep.op->suppressed_outputs();
    }

    void start_replica(std::int32_t node, std::int32_t qid, Replica& rep) {
        log(LogKind::OpStarted, node, rep.mig, qid);
        if (!rep.buffer.empty()) {
            log(LogKind::BufferDrained, node, rep.mig, qid, -1, rep.buffer.size(),
                rep.buffer_bytes);
        }
        rep.phase = Phase::Running;
        rep.buffer_armed = false;
        std::deque<Tuple> pending;
        pending.swap(rep.buffer);
        rep.buffer_bytes = 0;
        for (const auto& t : pending) {
            process_tuple(node, qid, rep, t);
        }
    }

    // --- state transfer receipt ---------------------------------------------

    void on_blob(std::int32_t node, const BlobPayload& p) {
        log(LogKind::BlobDelivered, node, p.mig, p.query, -1, p.blob->bytes(),
            p.replication ? 1 : 0);
        if (p.replication) {
            receive_checkpoint(node, p);
            return;
        }
        auto mig_it = migrations.find(p.mig);
        if (mig_it == migrations.end() || mig_it->second.status != "running") {
            return; // transfer for a dead migration: ignore
        }
        NodeState& ns = nodes[node];
        auto [ib_it, fresh] = ns.inbound.try_emplace(p.query);
        InboundState& ib = ib_it->second;
        if (fresh) {
            ib.mig = p.mig;
        }
        if (!ib.seeded) {
            ib.seeded = true;
            // Checkpoint-assisted: an incremental transfer builds on the
            // locally replicated chain. Full or immutable-base transfers are
            // self-contained and leave any stored chain alone.
            if (p.blob->kind == BlobKind::Incremental) {
                auto st = ns.stored_checkpoints.find(p.query);
                if (st != ns.stored_checkpoints.end()) {
                    ib.chain = std::move(st->second);
                    ns.stored_checkpoints.erase(st);
                }
            }
        }
        auto& parts = ib.partial[p.blob->version];
        parts.push_back(*p.blob);
        if (parts.size() < static_cast<std::size_t>(std::max<std::int32_t>(p.blob->chunk_count, 1))) {
            return;
        }
        try {
            StateBlob whole = parts.size() == 1 ? std::move(parts.front())
                                                : assemble_chunks(std::move(parts));
            ib.partial.erase(p.blob->version);
            // An empty increment that does not advance the version is a
            // finish-line message (nothing changed since the snapshot), not a
            // chain link.
            const bool noop = whole.kind == BlobKind::Incremental && whole.records.empty() &&
                              !ib.chain.empty() && whole.version == ib.chain.version();
            if (!noop) {
                ib.chain.add(std::move(whole));
            }
        } catch (const std::exception&) {
            abort_migration(p.mig, "state chain assembly failed");
            return;
        }
        if (!p.final_piece) {
            send_move_ack(node, p.sender, p.mig, p.move_uid);
            return;
        }
        deliver_state(node, p);
    }

    void deliver_state(std::int32_t node, const BlobPayload& p) {
        NodeState& ns = nodes[node];
        auto ib_it = ns.inbound.find(p.query);
        if (ib_it == ns.inbound.end()) {
            return;
        }
        StateBlob full;
        try {
            full = ib_it->second.chain.reconstruct();
        } catch (const std::exception&) {
            abort_migration(p.mig, "state chain reconstruction failed");
            return;
        }
        ns.inbound.erase(ib_it);
        Replica& rep = ensure_replica(node, p.query, p.mig);
        try {
            rep.op->load(full);
        } catch (const std::exception&) {
            abort_migration(p.mig, "state load failed");
            return;
        }
        log(LogKind::StateLoaded, node, p.mig, p.query, -1, full.bytes());
        if (rep.phase != Phase::Running) {
            if (rep.auto_start) {
                start_replica(node, p.query, rep);
            } else {
                rep.phase = Phase::Loaded;
            }
        }
        send_move_ack(node, p.sender, p.mig, p.move_uid);
    }

    void receive_checkpoint(std::int32_t node, const BlobPayload& p) {
        NodeState& ns = nodes[node];
        auto [it, fresh] = ns.stored_checkpoints.try_emplace(p.query);
        Checkpoint& chain = it->second;
        try {
            if (!fresh && p.blob->kind != BlobKind::Incremental) {
                chain = Checkpoint{}; // a new full snapshot restarts the chain
            }
            chain.add(*p.blob);
            log(LogKind::CheckpointReplicated, node, p.mig, p.query, -1, p.blob->bytes());
        } catch (const std::exception&) {
            log(LogKind::ReplicationFailed, node, p.mig, p.query, -1, p.blob->bytes());
        }
    }

    Replica& ensure_replica(std::int32_t node, std::int32_t qid, std::int32_t mig) {
        NodeState& ns = nodes[node];
        auto it = ns.replicas.find(qid);
        if (it != ns.replicas.end() && it->second.phase != Phase::Released) {
            return it->second;
        }
        Replica rep;
        rep.op = std::make_unique<Operator>(qdef(qid));
        rep.phase = Phase::Pending;
        rep.mig = mig;
        auto mig_it = migrations.find(mig);
        if (mig_it != migrations.end()) {
            rep.auto_start = !mig_it->second.ctx->behavior.explicit_start;
        }
        log(LogKind::OpCreated, node, mig, qid);
        ns.routes[qdef(qid).output_stream].hops = consumer_nodes_excluding(qid, node);
        auto [nit, _] = ns.replicas.insert_or_assign(qid, std::move(rep));
        return nit->second;
    }

    // The new host routes the query's output to the same consumers the old
    // host fed (their placement doesn't change in this migration).
    std::vector<std::int32_t> consumer_nodes_excluding(std::int32_t qid, std::int32_t self) const {
        auto v = consumer_nodes(qdef(qid).output_stream);
        v.erase(std::remove(v.begin(), v.end(), self), v.end());
        return v;
    }

    // --- task execution -------------------------------------------------------

    void step_frame(std::uint64_t uid) {
        while (true) {
            auto it = frames.find(uid);
            if (it == frames.end()) {
                return;
            }
            Frame& f = it->second;
            if (f.wait != Frame::Wait::None) {
                return;
            }
            if (f.idx >= f.tasks->size()) {
                complete_frame(uid);
                return;
            }
            if (!exec_task(f, (*f.tasks)[f.idx])) {
                return;
            }
            auto again = frames.find(uid);
            if (again == frames.end()) {
                return; // aborted mid-task
            }
            ++again->second.idx;
        }
    }

    // Runs one task. Returns true when complete (frame advances), false when
    // the frame suspended (it resumes via acks, markers, or state arrival).
    bool exec_task(Frame& f, const ControlTask& t) {
        auto& rec = rec_of(f.mig);
        MigrationContext& ctx = *rec.ctx;
        const std::int32_t node = f.node;
        switch (t.kind) {
        case TaskKind::ControlMessage:
            return exec_control_message(f, t, rec);
        case TaskKind::Schedule:
            return exec_schedule(f, t, rec);
        case TaskKind::Redirect:
            exec_redirect(node, t, ctx, -1);
            return true;
        case TaskKind::AddNextHop:
            exec_add_next_hop(node, t, ctx);
            return true;
        case TaskKind::RemoveNextHop:
            exec_remove_next_hop(node, t, ctx, -1);
            return true;
        case TaskKind::BufferStreams:
            exec_buffer_streams(node, t, ctx);
            return true;
        case TaskKind::StopStreams:
            return true; // declarative: buffering/suppression rules do the work
        case TaskKind::StartStreams:
            exec_start_streams(node, t, ctx);
            return true;
        case TaskKind::StartQuery:
            exec_start_query(node, ctx, rec);
            return true;
        case TaskKind::StopQuery: {
            // With a scheduled handover the old replica drains first: it keeps
            // processing until the takeover cut has arrived on every input.
            NodeState& ns = nodes[node];
            auto rit = ns.replicas.find(ctx.query);
            if (ctx.takeover_ts >= 0 && rit != ns.replicas.end() &&
                rit->second.phase != Phase::Released &&
                !covers_inputs(ns.cut_streams[f.mig], ctx.query)) {
                f.wait = Frame::Wait::CutMarkers;
                return false;
            }
            release_replica(node, ctx.query, ctx.migration_id);
            return true;
        }
        case TaskKind::RequestMigration:
            ensure_replica(node, ctx.query, ctx.migration_id);
            return true;
        case TaskKind::MoveState:
        case TaskKind::MoveIncrementalState:
            return exec_move_state(f, t, rec);
        case TaskKind::MoveImmutableState:
            return exec_move_immutable(f, rec);
        case TaskKind::ReplicateCheckpoint:
            exec_replicate_checkpoint(node, t, ctx);
            return true;
        }
        throw std::runtime_error("unhandled task kind");
    }

    bool exec_control_message(Frame& f, const ControlTask& t, MigrationRec& rec) {
        MigrationContext& ctx = *rec.ctx;
        auto targets = resolve_targets(t.target, ctx);
        std::sort(targets.begin(), targets.end());
        targets.erase(std::unique(targets.begin(), targets.end()), targets.end());
        for (std::int32_t tgt : targets) {
            const std::uint64_t env = next_uid++;
            f.pending_acks.insert(env);
            if (tgt == f.node) {
                // Local dispatch: no wire, but the same run-once bookkeeping.
                CtrlPayload p{f.mig, &t, env, f.node};
                on_ctrl_local(tgt, p);
                continue;
            }
            if (!send_ctrl(f.node, tgt, CtrlPayload{f.mig, &t, env, f.node})) {
                abort_migration(f.mig, "control message unroutable");
                return false;
            }
        }
        if (f.pending_acks.empty()) {
            return true;
        }
        f.wait = Frame::Wait::ChildAcks;
        return false;
    }

    void on_ctrl_local(std::int32_t node, const CtrlPayload& p) {
        auto& st = nodes[node].cm_status[{p.mig, p.cm}];
        if (st.done) {
            on_ack(node, p.mig, p.env_uid);
            return;
        }
        if (st.frame != 0) {
            st.waiters.emplace_back(p.sender, p.env_uid);
            return;
        }
        spawn_frame(node, p.mig, &p.cm->body, p.sender, p.env_uid, p.cm);
    }

    bool exec_schedule(Frame& f, const ControlTask& t, MigrationRec& rec) {
        MigrationContext& ctx = *rec.ctx;
        if (ctx.takeover_ts < 0) {
            compute_takeover(f.node, rec);
        }
        const SimTime T = ctx.takeover_ts;
        log(LogKind::ScheduleArmed, f.node, f.mig, ctx.query, -1, static_cast<std::uint64_t>(T));
        // Route changes become value cuts immediately: tuples stamped at or
        // past the takeover instant already follow the new path.
        for (const auto& inner : t.body) {
            switch (inner.kind) {
            case TaskKind::Redirect:
                arm_pending_cut(f.node, inner, ctx, T, /*redirect=*/true);
                break;
            case TaskKind::RemoveNextHop:
                arm_pending_cut(f.node, inner, ctx, T, /*redirect=*/false);
                break;
            case TaskKind::StartStreams:
                break; // fires at the takeover instant
            default:
                throw std::runtime_error("unsupported task inside a schedule");
            }
        }
        ++rec.pending_timers;
        const std::int32_t node = f.node;
        const std::int32_t mig = f.mig;
        const std::vector<ControlTask>* body = &t.body;
        q.schedule(std::max(T, now()), [this, node, mig, body, T]() {
            fire_schedule(node, mig, *body, T);
        });
        return true; // arming does not block the rest of the frame
    }

    void arm_pending_cut(std::int32_t node, const ControlTask& inner, const MigrationContext& ctx,
                         SimTime T, bool redirect) {
        NodeState& ns = nodes[node];
        for (std::int32_t s : resolve_streams(inner, ctx)) {
            auto rit = ns.routes.find(s);
            if (rit == ns.routes.end()) {
                continue;
            }
            PendingCut cut;
            cut.at = T;
            cut.mig = ctx.migration_id;
            if (redirect) {
                cut.remove_hop = resolve_single(inner.from, ctx);
                cut.add_hop = resolve_single(inner.to, ctx);
            } else {
                cut.remove_hop = resolve_single(inner.to, ctx);
            }
            rit->second.pending = cut;
        }
    }

    void fire_schedule(std::int32_t node, std::int32_t mig, const std::vector<ControlTask>& body,
                       SimTime T) {
        auto mig_it = migrations.find(mig);
        if (mig_it == migrations.end()) {
            return;
        }
        MigrationRec& rec = mig_it->second;
        log(LogKind::ScheduleFired, node, mig, rec.ctx->query, -1, static_cast<std::uint64_t>(T));
        if (rec.status == "running") {
            for (const auto& inner : body) {
                switch (inner.kind) {
                case TaskKind::Redirect:
                    exec_redirect(node, inner, *rec.ctx, T);
                    break;
                case TaskKind::RemoveNextHop:
                    exec_remove_next_hop(node, inner, *rec.ctx, T);
                    break;
                case TaskKind::StartStreams:
                    exec_start_streams(node, inner, *rec.ctx);
                    break;
                default:
                    break;
                }
            }
        }
        --rec.pending_timers;
        try_complete_migration(mig);
    }

    std::vector<std::int32_t> resolve_streams(const ControlTask& t,
                                              const MigrationContext& ctx) const {
        const QueryDef& qd = qdef(ctx.query);
        switch (t.streams) {
        case StreamSel::QueryInputs:
            return qd.input_streams;
        case StreamSel::QueryOutputs:
            return {qd.output_stream};
        case StreamSel::None:
            return qd.input_streams; // routing tasks default to the inputs
        }
        return {};
    }

    void exec_redirect(std::int32_t node, const ControlTask& t, const MigrationContext& ctx,
                       SimTime cut_ts) {
        NodeState& ns = nodes[node];
        const std::int32_t from_hop = resolve_single(t.from, ctx);
        const std::int32_t to_hop = resolve_single(t.to, ctx);
        for (std::int32_t s : resolve_streams(t, ctx)) {
            auto rit = ns.routes.find(s);
            if (rit == ns.routes.end()) {
                continue;
            }
            auto& hops = rit->second.hops;
            auto hit = std::find(hops.begin(), hops.end(), from_hop);
            if (hit == hops.end()) {
                continue;
            }
            *hit = to_hop;
            if (rit->second.pending && rit->second.pending->mig == ctx.migration_id) {
                rit->second.pending.reset();
            }
            MarkerInfo m{MarkerKind::RedirectCut, ctx.migration_id, ctx.query, s, cut_ts};
            if (!send_marker(node, from_hop, m)) {
                abort_migration(ctx.migration_id, "cut marker unroutable");
                return;
            }
        }
    }

    void exec_remove_next_hop(std::int32_t node, const ControlTask& t, const MigrationContext& ctx,
                              SimTime cut_ts) {
        NodeState& ns = nodes[node];
        const std::int32_t hop = resolve_single(t.to, ctx);
        for (std::int32_t s : resolve_streams(t, ctx)) {
            auto rit = ns.routes.find(s);
            if (rit == ns.routes.end()) {
                continue;
            }
            auto& hops = rit->second.hops;
            auto hit = std::find(hops.begin(), hops.end(), hop);
            if (hit == hops.end()) {
                continue;
            }
            hops.erase(hit);
            if (rit->second.pending && rit->second.pending->mig == ctx.migration_id) {
                rit->second.pending.reset();
            }
            MarkerInfo m{MarkerKind::RemoveCut, ctx.migration_id, ctx.query, s, cut_ts};
            if (!send_marker(node, hop, m)) {
                abort_migration(ctx.migration_id, "cut marker unroutable");
                return;
            }
        }
    }

    void exec_add_next_hop(std::int32_t node, const ControlTask& t, const MigrationContext& ctx) {
        NodeState& ns = nodes[node];
        const std::int32_t to_hop = resolve_single(t.to, ctx);
        bool routed_any = false;
        for (std::int32_t s : resolve_streams(t, ctx)) {
            auto rit = ns.routes.find(s);
            if (rit == ns.routes.end()) {
                continue;
            }
            routed_any = true;
            auto& hops = rit->second.hops;
            if (std::find(hops.begin(), hops.end(), to_hop) == hops.end()) {
                hops.push_back(to_hop);
            }
            const SimTime sent_wm = rit->second.last_sent_ts;
            MarkerInfo begin{MarkerKind::DupBegin, ctx.migration_id, ctx.query, s, sent_wm};
            MarkerInfo notice{MarkerKind::DupNotice, ctx.migration_id, ctx.query, s, sent_wm};
            if (!send_marker(node, to_hop, begin) ||
                !send_marker(node, ctx.old_host, notice)) {
                abort_migration(ctx.migration_id, "duplication marker unroutable");
                return;
            }
        }
        if (!routed_any && ns.replicas.count(ctx.query)) {
            // At the old host this arms forwarding for any last stragglers.
            ns.replicas[ctx.query].forward_to = to_hop;
        }
    }

    void exec_buffer_streams(std::int32_t node, const ControlTask& t, const MigrationContext& ctx) {
        NodeState& ns = nodes[node];
        auto streams = resolve_streams(t, ctx);
        std::set<std::int32_t> routed;
        for (std::int32_t s : streams) {
            if (ns.routes.count(s)) {
                routed.insert(s);
            }
        }
        if (!routed.empty()) {
            Hold h;
            h.mig = ctx.migration_id;
            h.query = ctx.query;
            h.streams = routed;
            ns.holds.push_back(std::move(h));
            log(LogKind::BufferArmed, node, ctx.migration_id, ctx.query, -1, 0);
            return;
        }
        Replica& rep = ensure_replica(node, ctx.query, ctx.migration_id);
        rep.buffer_armed = true;
        log(LogKind::BufferArmed, node, ctx.migration_id, ctx.query, -1, 1);
    }

    void exec_start_streams(std::int32_t node, const ControlTask& t, const MigrationContext& ctx) {
        NodeState& ns = nodes[node];
        // Release any matching upstream hold: its tuples flow over the routes
        // as they stand now (post-redirect).
        for (auto it = ns.holds.begin(); it != ns.holds.end(); ++it) {
            if (it->mig != ctx.migration_id) {
                continue;
            }
            Hold hold = std::move(*it);
            ns.holds.erase(it);
            log(LogKind::BufferDrained, node, ctx.migration_id, ctx.query, -1, hold.held.size(),
                hold.bytes);
            for (const auto& tup : hold.held) {
                route_and_send(node, tup);
            }
            return;
        }
        if (t.streams == StreamSel::QueryOutputs) {
            return; // output gating is value-based; nothing to do here
        }
        auto rit = ns.replicas.find(ctx.query);
        if (rit != ns.replicas.end()) {
            Replica& rep = rit->second;
            if (rep.phase == Phase::Loaded || rep.phase == Phase::Pending) {
                if (rep.phase == Phase::Loaded) {
                    start_replica(node, ctx.query, rep);
                } else {
                    rep.auto_start = true; // start as soon as state lands
                }
            }
        }
    }

    void exec_start_query(std::int32_t node, const MigrationContext& ctx, MigrationRec& rec) {
        NodeState& ns = nodes[node];
        auto existing = ns.replicas.find(ctx.query);
        if (existing != ns.replicas.end() && existing->second.phase != Phase::Released) {
            return; // already present (re-delivery)
        }
        Replica rep;
        rep.op = std::make_unique<Operator>(qdef(ctx.query));
        rep.mig = ctx.migration_id;
        log(LogKind::OpCreated, node, ctx.migration_id, ctx.query);
        ns.routes[qdef(ctx.query).output_stream].hops = consumer_nodes_excluding(ctx.query, node);
        const MigrationBehavior& bh = ctx.behavior;
        if (bh.fresh_replica_awaits_dup) {
            rep.phase = Phase::AwaitDup;
            auto [it2, _] = ns.replicas.insert_or_assign(ctx.query, std::move(rep));
            // Catch up on duplication markers that raced ahead of this task.
            Replica& r = it2->second;
            for (std::int32_t s : qdef(ctx.query).input_streams) {
                auto mk = ns.markers.find({ctx.migration_id, s});
                if (mk != ns.markers.end() && mk->second.kind == MarkerKind::DupBegin) {
                    r.dup_seen.insert(s);
                    r.dup_floor = std::max(r.dup_floor, mk->second.cut);
                }
            }
            if (covers_inputs(r.dup_seen, ctx.query)) {
                ReplicaRules rules = r.op->rules();
                rules.observe_floor = r.dup_floor + 1;
                r.op->set_rules(rules);
                start_replica(node, ctx.query, r);
            }
            return;
        }
        // Parallel replicas split the output by the takeover instant, so it
        // must exist before the first tuple can reach this replica.
        if (bh.suppress_before_takeover && ctx.takeover_ts < 0) {
            compute_takeover(node, rec);
        }
        ReplicaRules rules;
        if (ctx.takeover_ts >= 0) {
            if (bh.suppress_before_takeover) {
                rules.emit_input_floor = ctx.takeover_ts;
                rules.window_emit_after = ctx.takeover_ts;
            } else {
                rules.observe_floor = ctx.takeover_ts;
            }
        }
        rep.op->set_rules(rules);
        rep.phase = Phase::Running;
        auto [it3, _] = ns.replicas.insert_or_assign(ctx.query, std::move(rep));
        (void)it3;
        log(LogKind::OpStarted, node, ctx.migration_id, ctx.query);
        (void)rec;
    }

    bool exec_move_state(Frame& f, const ControlTask& t, MigrationRec& rec) {
        MigrationContext& ctx = *rec.ctx;
        NodeState& ns = nodes[f.node];
        auto rit = ns.replicas.find(ctx.query);
        if (rit == ns.replicas.end() || !rit->second.op) {
            abort_migration(f.mig, "no replica to move state from");
            return false;
        }
        Replica& rep = rit->second;
        StateBlob blob;
        if (ctx.behavior.parallel_track) {
            // The snapshot was taken when the duplication notices arrived.
            auto st = ns.stash.find(f.mig);
            if (st == ns.stash.end()) {
                if (!covers_inputs(ns.notice_streams[f.mig], ctx.query)) {
                    f.wait = Frame::Wait::NoticeMarkers;
                    return false;
                }
                maybe_stash_state(f.node, f.mig, ctx.query);
                st = ns.stash.find(f.mig);
                if (st == ns.stash.end()) {
                    abort_migration(f.mig, "no state snapshot at duplication point");
                    return false;
                }
            }
            blob = std::move(st->second);
            ns.stash.erase(st);
        } else {
            if (!covers_inputs(ns.cut_streams[f.mig], ctx.query)) {
                f.wait = Frame::Wait::CutMarkers;
                return false;
            }
            if (rep.phase == Phase::Running) {
                log(LogKind::OpStopped, f.node, f.mig, ctx.query, -1, 0);
                rep.phase = Phase::Paused;
            }
            const std::uint64_t since = t.kind == TaskKind::MoveIncrementalState
                                            ? incremental_base(ctx.new_host, ctx.query, rep)
                                            : 0;
            blob = rep.op->extract(since);
            rep.last_shipped = rep.op->mark();
        }
        const std::uint64_t move_uid = next_uid++;
        if (!send_blob(f.node, ctx.new_host, std::move(blob), f.mig, ctx.query,
                       /*replication=*/false, /*final=*/true, move_uid,
                       ctx.options.max_chunk_bytes)) {
            abort_migration(f.mig, "state transfer unroutable");
            return false;
        }
        f.wait = Frame::Wait::MoveAck;
        f.move_uid = move_uid;
        return false;
    }

    bool exec_move_immutable(Frame& f, MigrationRec& rec) {
        MigrationContext& ctx = *rec.ctx;
        NodeState& ns = nodes[f.node];
        auto rit = ns.replicas.find(ctx.query);
        if (rit == ns.replicas.end() || !rit->second.op) {
            abort_migration(f.mig, "no replica to move state from");
            return false;
        }
        Replica& rep = rit->second;
        StateBlob blob = rep.op->extract(0);
        blob.kind = BlobKind::Immutable;
        rep.last_shipped = rep.op->mark();
        const std::uint64_t move_uid = next_uid++;
        if (!send_blob(f.node, ctx.new_host, std::move(blob), f.mig, ctx.query,
                       /*replication=*/false, /*final=*/false, move_uid,
                       ctx.options.max_chunk_bytes)) {
            abort_migration(f.mig, "state transfer unroutable");
            return false;
        }
        f.wait = Frame::Wait::MoveAck;
        f.move_uid = move_uid;
        return false;
    }

    void exec_replicate_checkpoint(std::int32_t node, const ControlTask& t,
                                   const MigrationContext& ctx) {
        const std::int32_t target = resolve_single(t.to, ctx);
        replicate_once(node, ctx.query, target, ctx.migration_id);
    }

    void replicate_once(std::int32_t node, std::int32_t qid, std::int32_t target,
                        std::int32_t mig) {
        auto rit = nodes[node].replicas.find(qid);
        if (rit == nodes[node].replicas.end() || !rit->second.op ||
            rit->second.phase != Phase::Running) {
            return;
        }
        Replica& rep = rit->second;
        if (rep.op->mark() == rep.last_shipped) {
            return; // nothing new since the last snapshot
        }
        StateBlob delta = rep.op->extract(rep.last_shipped);
        rep.last_shipped = rep.op->mark();
        log(LogKind::CheckpointTaken, node, mig, qid, -1, delta.bytes());
        if (!send_blob(node, target, std::move(delta), mig, qid, /*replication=*/true,
                       /*final=*/false, 0, 0)) {
            log(LogKind::ReplicationFailed, node, mig, qid);
        }
    }

    // --- frame completion -----------------------------------------------------

    void complete_frame(std::uint64_t uid) {
        auto it = frames.find(uid);
        if (it == frames.end()) {
            return;
        }
        const Frame f = std::move(it->second);
        frames.erase(it);
        auto mig_it = migrations.find(f.mig);
        if (mig_it != migrations.end()) {
            mig_it->second.frames.erase(uid);
        }
        if (f.cm) {
            auto& st = nodes[f.node].cm_status[{f.mig, f.cm}];
            st.done = true;
            st.frame = 0;
            auto waiters = std::move(st.waiters);
            st.waiters.clear();
            if (f.reply_node >= 0) {
                send_ack(f.node, f.reply_node, f.mig, f.reply_env);
            }
            for (const auto& [node, env] : waiters) {
                send_ack(f.node, node, f.mig, env);
            }
            return;
        }
        // Root frame: move to the next phase or finish.
        if (mig_it == migrations.end() || mig_it->second.status != "running") {
            return;
        }
        MigrationRec& rec = mig_it->second;
        ++rec.phase;
        if (rec.phase < rec.plan.phases.size()) {
            spawn_frame(rec.ctx->coordinator, rec.id, &rec.plan.phases[rec.phase], -1, 0, nullptr);
            return;
        }
        rec.root_done = true;
        try_complete_migration(rec.id);
    }

    void try_complete_migration(std::int32_t mig) {
        auto it = migrations.find(mig);
        if (it == migrations.end()) {
            return;
        }
        MigrationRec& rec = it->second;
        if (rec.status != "running" || !rec.root_done || rec.pending_timers > 0) {
            return;
        }
        rec.status = "completed";
        rec.finished = now();
        assignment[rec.ctx->query] = rec.ctx->new_host;
        migrating_queries.erase(rec.ctx->query);
        --active_migrations;
        // A paused old replica has served its purpose once the move is done.
        auto& old_ns = nodes[rec.ctx->old_host];
        auto rit = old_ns.replicas.find(rec.ctx->query);
        if (rit != old_ns.replicas.end() && rit->second.phase == Phase::Paused) {
            fold_op_counters(rit->second);
            rit->second.op.reset();
            rit->second.phase = Phase::Released;
            old_ns.routes.erase(qdef(rec.ctx->query).output_stream);
        }
        log(LogKind::MigrationCompleted, rec.ctx->coordinator, mig, rec.ctx->query);
    }

    void abort_migration(std::int32_t mig, const std::string& reason) {
        auto it = migrations.find(mig);
        if (it == migrations.end() || it->second.status != "running") {
            return;
        }
        MigrationRec& rec = it->second;
        rec.status = "aborted: " + reason;
        rec.finished = now();
        log(LogKind::MigrationAborted, rec.ctx->coordinator, mig, rec.ctx->query);
        for (std::uint64_t uid : rec.frames) {
            frames.erase(uid);
        }
        rec.frames.clear();
        migrating_queries.erase(rec.ctx->query);
        --active_migrations;
        for (std::size_t n = 0; n < nodes.size(); ++n) {
            NodeState& ns = nodes[n];
            for (auto& [s, route] : ns.routes) {
                if (route.pending && route.pending->mig == mig) {
                    route.pending.reset();
                }
            }
            // Release any held streams so data flows again.
            for (auto hit = ns.holds.begin(); hit != ns.holds.end();) {
                if (hit->mig != mig) {
                    ++hit;
                    continue;
                }
                Hold hold = std::move(*hit);
                hit = ns.holds.erase(hit);
                log(LogKind::BufferDrained, static_cast<std::int32_t>(n), mig, hold.query, -1,
                    hold.held.size(), hold.bytes);
                for (const auto& tup : hold.held) {
                    route_and_send(static_cast<std::int32_t>(n), tup);
                }
            }
            ns.stash.erase(mig);
        }
        // The old replica resumes; an unfinished new replica is discarded.
        auto& old_ns = nodes[rec.ctx->old_host];
        auto rit = old_ns.replicas.find(rec.ctx->query);
        if (rit != old_ns.replicas.end() && rit->second.phase == Phase::Paused) {
            rit->second.phase = Phase::Running;
            rit->second.forward_to = -1;
            log(LogKind::OpStarted, rec.ctx->old_host, mig, rec.ctx->query);
        }
        auto& new_ns = nodes[rec.ctx->new_host];
        auto nit = new_ns.replicas.find(rec.ctx->query);
        if (nit != new_ns.replicas.end() && nit->second.mig == mig &&
            nit->second.phase != Phase::Running) {
            elog.counters().dropped_tuples += nit->second.buffer.size();
            fold_op_counters(nit->second);
            new_ns.routes.erase(qdef(rec.ctx->query).output_stream);
            new_ns.replicas.erase(nit);
        }
        new_ns.inbound.erase(rec.ctx->query);
    }

    // --- takeover time ----------------------------------------------------

    void compute_takeover(std::int32_t sender, MigrationRec& rec) {
        MigrationContext& ctx = *rec.ctx;
        const QueryDef& qd = qdef(ctx.query);
        SimTime wm = 0;
        std::uint64_t state_bytes = 0;
        auto rit = nodes[ctx.old_host].replicas.find(ctx.query);
        if (rit != nodes[ctx.old_host].replicas.end() && rit->second.op) {
            wm = std::max<SimTime>(rit->second.op->watermark(), 0);
            state_bytes = rit->second.op->state_bytes();
        }
        SimTime transfer = 0;
        if (rec.moves_state && net.has_link(ctx.old_host, ctx.new_host)) {
            const double est_s = estimate_migration_time_s(
                state_bytes, net.bandwidth_bps(ctx.old_host, ctx.new_host),
                seconds(net.latency(ctx.old_host, ctx.new_host)), 0, ctrl_bytes());
            transfer = ns_from_seconds(est_s);
        }
        const SimTime extent = qd.kind == OpKind::Aggregate ? qd.window.extent : 0;
        SimTime margin;
        if (ctx.options.takeover_margin_s >= 0) {
            margin = ns_from_seconds(ctx.options.takeover_margin_s);
        } else if (cfg.takeover_margin_s >= 0) {
            margin = ns_from_seconds(cfg.takeover_margin_s);
        } else if (net.has_link(ctx.old_host, ctx.new_host)) {
            const SimTime one_way =
                transmission_ns(static_cast<std::uint64_t>(ctrl_bytes()),
                                net.bandwidth_bps(ctx.old_host, ctx.new_host)) +
                net.latency(ctx.old_host, ctx.new_host);
            margin = 4 * one_way; // two control round trips
        } else {
            margin = ns_from_seconds(0.1);
        }
        ctx.takeover_ts = std::max(now(), wm) + transfer + extent + margin;
        (void)sender;
    }

    // --- checkpoint daemon ------------------------------------------------

    void schedule_checkpoints() {
        for (const auto& cc : ckpt_cfgs) {
            if (cc.interval <= 0) {
                throw std::runtime_error("checkpoint interval must be positive");
            }
            schedule_next_checkpoint(cc, cc.interval);
        }
    }

    void schedule_next_checkpoint(CheckpointConfig cc, SimTime at) {
        if (at > cc.until) {
            return;
        }
        q.schedule(at, [this, cc, at]() {
            if (!migrating_queries.count(cc.query)) {
                const std::int32_t host = assignment.at(cc.query);
                replicate_once(host, cc.query, cc.target, -1);
            }
            schedule_next_checkpoint(cc, at + cc.interval);
        });
    }

    // --- trigger / run ------------------------------------------------------

    std::map<std::int32_t, int> routed_input_counts(std::int32_t qid) const {
        std::map<std::int32_t, int> counts;
        for (std::int32_t s : qdef(qid).input_streams) {
            ++counts[producer_node(s)];
        }
        return counts;
    }

    MigrationContext resolve_context(const MigrationPlan& plan) const {
        MigrationContext ctx = plan.ctx;
        const QueryDef& qd = qdef(ctx.query);
        ctx.old_host = assignment.at(ctx.query);
        ctx.upstreams.clear();
        for (std::int32_t s : qd.input_streams) {
            ctx.upstreams.push_back(producer_node(s));
        }
        std::sort(ctx.upstreams.begin(), ctx.upstreams.end());
        ctx.upstreams.erase(std::unique(ctx.upstreams.begin(), ctx.upstreams.end()),
                            ctx.upstreams.end());
        ctx.downstreams = consumer_nodes(qd.output_stream);
        return ctx;
    }

    void trigger_migration(MigrationPlan plan) {
        const std::int32_t qid = plan.ctx.query;
        if (!query_by_id.count(qid)) {
            throw std::runtime_error("migration names an unknown query");
        }
        if (migrating_queries.count(qid)) {
            log(LogKind::Warning, plan.ctx.coordinator, -1, qid, -1, 3);
            return;
        }
        MigrationContext ctx = resolve_context(plan);
        if (ctx.old_host == ctx.new_host) {
            log(LogKind::Warning, ctx.coordinator, -1, qid, -1, 4);
            return;
        }
        check_node(ctx.coordinator);
        check_node(ctx.new_host);
        ctx.migration_id = next_mig_id++;
        const std::uint64_t expected =
            expected_control_messages(plan.phases, ctx, routed_input_counts(qid));
        MigrationRec rec;
        rec.id = ctx.migration_id;
        rec.plan = std::move(plan);
        rec.ctx = std::make_shared<MigrationContext>(std::move(ctx));
        rec.moves_state = false;
        for (const auto& phase : rec.plan.phases) {
            if (tasks_move_state(phase)) {
                rec.moves_state = true;
            }
        }
        rec.triggered = now();
        const std::int32_t mig = rec.id;
        log(LogKind::MigrationTriggered, rec.ctx->coordinator, mig, qid, -1, expected);
        migrating_queries.insert(qid);
        ++active_migrations;
        auto [it, _] = migrations.emplace(mig, std::move(rec));
        spawn_frame(it->second.ctx->coordinator, mig, &it->second.plan.phases.at(0), -1, 0,
                    nullptr);
    }

    RunResult run() {
        if (ran) {
            throw std::runtime_error("a simulation can only run once");
        }
        ran = true;
        schedule_checkpoints();
        q.run_until_quiescent(cfg.max_events);
        for (auto& ns : nodes) {
            for (auto& [qid, rep] : ns.replicas) {
                fold_op_counters(rep);
            }
        }
        RunResult r;
        r.end_time = now();
        r.sink_records = std::move(sink_records);
        for (auto& [id, rec] : migrations) {
            MigrationOutcome o;
            o.id = id;
            o.variant = rec.plan.variant;
            o.status = rec.status == "running" ? "incomplete" : rec.status;
            o.triggered = rec.triggered;
            o.finished = rec.finished;
            r.migrations.push_back(std::move(o));
        }
        return r;
    }
};

// ---------------------------------------------------------------------------
// Simulation facade

Simulation::Simulation(TopologySpec topo, Catalog catalog, EngineConfig cfg)
    : impl_(std::make_unique<Impl>(std::move(topo), std::move(catalog), cfg)) {}

Simulation::~Simulation() = default;

EventQueue& Simulation::queue() { return impl_->q; }
EventLog& Simulation::log() { return impl_->elog; }
SimTime Simulation::now() const { return impl_->now(); }
const Catalog& Simulation::catalog() const { return impl_->cat; }

void Simulation::emit_tuple(std::int32_t stream, std::int64_t key, std::uint32_t payload_bytes) {
    impl_->emit_tuple(stream, key, payload_bytes);
}

void Simulation::add_event(SimTime at, std::function<void()> fn) {
    impl_->q.schedule(at, std::move(fn));
}

void Simulation::configure_checkpoints(const CheckpointConfig& cfg) {
    if (!impl_->query_by_id.count(cfg.query)) {
        throw std::runtime_error("checkpoint config names an unknown query");
    }
    impl_->check_node(cfg.target);
    impl_->ckpt_cfgs.push_back(cfg);
}

void Simulation::trigger_migration_at(SimTime at, MigrationPlan plan) {
    impl_->q.schedule(at, [this, plan = std::move(plan)]() mutable {
        impl_->trigger_migration(std::move(plan));
    });
}

void Simulation::trigger_migration_now(MigrationPlan plan) {
    impl_->trigger_migration(std::move(plan));
}

std::int32_t Simulation::query_host(std::int32_t query) const {
    auto it = impl_->assignment.find(query);
    if (it == impl_->assignment.end()) {
        throw std::runtime_error("unknown query id");
    }
    return it->second;
}

bool Simulation::query_in_migration(std::int32_t query) const {
    return impl_->migrating_queries.count(query) > 0;
}

std::uint64_t Simulation::query_state_bytes(std::int32_t query) const {
    const std::int32_t host = query_host(query);
    auto it = impl_->nodes[host].replicas.find(query);
    if (it == impl_->nodes[host].replicas.end() || !it->second.op) {
        return 0;
    }
    return it->second.op->state_bytes();
}

double Simulation::input_rate_estimate(std::int32_t query) const {
    auto it = impl_->rate_est.find(query);
    return it == impl_->rate_est.end() ? 0.0 : it->second.value(impl_->now());
}

double Simulation::selectivity_estimate(std::int32_t query) const {
    auto it = impl_->sel_counts.find(query);
    if (it == impl_->sel_counts.end() || it->second.first == 0) {
        return 1.0;
    }
    return static_cast<double>(it->second.second) / static_cast<double>(it->second.first);
}

std::uint64_t Simulation::expected_control_for(const MigrationPlan& plan,
                                               std::int32_t old_host) const {
    MigrationContext ctx = impl_->resolve_context(plan);
    ctx.old_host = old_host;
    return expected_control_messages(plan.phases, ctx,
                                     impl_->routed_input_counts(plan.ctx.query));
}

RunResult Simulation::run() { return impl_->run(); }

} // namespace migrasim
