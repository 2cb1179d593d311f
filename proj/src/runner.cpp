#include "migrasim/runner.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <tuple>

#include "migrasim/decision.hpp"
#include "migrasim/engine.hpp"

namespace migrasim {
namespace {

struct NameMaps {
    std::map<std::string, std::int32_t> node;
    std::map<std::string, std::int32_t> stream;
    std::map<std::string, std::int32_t> query;
};

NameMaps build_name_maps(const Scenario& sc) {
    NameMaps nm;
    for (std::size_t i = 0; i < sc.nodes.size(); ++i)
        nm.node[sc.nodes[i]] = static_cast<std::int32_t>(i);
    for (std::size_t i = 0; i < sc.streams.size(); ++i)
        nm.stream[sc.streams[i].name] = static_cast<std::int32_t>(i);
    for (std::size_t i = 0; i < sc.queries.size(); ++i)
        nm.query[sc.queries[i].name] = static_cast<std::int32_t>(i);
    return nm;
}

OpKind op_kind_from(const std::string& kind) {
    if (kind == "filter") return OpKind::Filter;
    if (kind == "join") return OpKind::Join;
    return OpKind::Aggregate;
}

std::unique_ptr<Simulation> build_simulation(const Scenario& sc, const NameMaps& nm,
                                             const RunConfig& cfg) {
    TopologySpec topo;
    topo.node_names = sc.nodes;
    topo.control_message_bytes = sc.control_message_bytes;
    for (const LinkDecl& l : sc.links) {
        LinkSpec ls;
        ls.a = nm.node.at(l.a);
        ls.b = nm.node.at(l.b);
        ls.bandwidth_bps = l.bandwidth_bps;
        ls.latency = ns_from_seconds(l.latency_s);
        topo.links.push_back(ls);
    }

    Catalog cat;
    for (std::size_t i = 0; i < sc.streams.size(); ++i) {
        StreamDef sd;
        sd.id = static_cast<std::int32_t>(i);
        sd.name = sc.streams[i].name;
        sd.source_node = sc.streams[i].source.empty() ? -1 : nm.node.at(sc.streams[i].source);
        cat.streams.push_back(sd);
    }
    for (std::size_t i = 0; i < sc.queries.size(); ++i) {
        const QueryDecl& q = sc.queries[i];
        QueryDef qd;
        qd.id = static_cast<std::int32_t>(i);
        qd.name = q.name;
        qd.kind = op_kind_from(q.kind);
        for (const std::string& in : q.inputs) qd.input_streams.push_back(nm.stream.at(in));
        qd.output_stream = nm.stream.at(q.output);
        if (qd.kind == OpKind::Aggregate) {
            qd.window.extent = ns_from_seconds(q.window.extent_s);
            qd.window.slide =
                q.window.slide_s > 0 ? ns_from_seconds(q.window.slide_s) : qd.window.extent;
        }
        qd.pass_every = q.pass_every;
        cat.queries.push_back(qd);
        cat.assignment[qd.id] = nm.node.at(q.host);
    }
    for (const SinkDecl& s : sc.sinks)
        cat.sinks[nm.stream.at(s.stream)].push_back(nm.node.at(s.node));

    EngineConfig ec;
    ec.max_events = sc.max_events;
    ec.trace = cfg.trace;
    return std::make_unique<Simulation>(std::move(topo), std::move(cat), ec);
}

// Chained emission scheduling: only the next event per source sits in the
// queue, whatever the workload size.
struct EmissionFeed {
    Simulation* sim = nullptr;
    std::int32_t stream = -1;
    std::vector<Emission> emissions;
    std::size_t next = 0;
};

void schedule_feed(const std::shared_ptr<EmissionFeed>& feed) {
    if (feed->next >= feed->emissions.size()) return;
    const Emission& e = feed->emissions[feed->next];
    feed->sim->add_event(e.t, [feed] {
        const Emission& cur = feed->emissions[feed->next];
        feed->sim->emit_tuple(feed->stream, cur.key, cur.payload_bytes);
        ++feed->next;
        schedule_feed(feed);
    });
}

// Returns the time of the last scheduled emission (0 for an empty workload).
SimTime install_workload(Simulation& sim, const Scenario& sc, const NameMaps& nm) {
    SimTime last = 0;
    for (const SourceDecl& src : sc.workload) {
        SourceSpec spec;
        spec.stream = nm.stream.at(src.stream);
        spec.phases = src.phases;
        spec.extra = src.extra;
        auto feed = std::make_shared<EmissionFeed>();
        feed->sim = &sim;
        feed->stream = spec.stream;
        feed->emissions = generate_emissions(spec, sc.seed);
        if (!feed->emissions.empty()) last = std::max(last, feed->emissions.back().t);
        schedule_feed(feed);
    }
    return last;
}

const QueryDecl& query_decl(const Scenario& sc, const std::string& name) {
    for (const QueryDecl& q : sc.queries)
        if (q.name == name) return q;
    throw ScenarioError("unknown query: " + name);
}

MigrationPlan plan_from_decl(const Scenario& sc, const MigrationDecl& d, const NameMaps& nm) {
    auto v = variant_from_name(d.variant);
    if (!v) throw ScenarioError("unknown migration variant: " + d.variant);

    ProgramOptions opts;
    opts.buffer_at_upstream = d.buffer_at_upstream;
    opts.max_chunk_bytes = d.max_chunk_bytes;
    opts.takeover_margin_s = d.takeover_margin_s;
    opts.consistency_waiver = d.consistency_waiver;
    if (*v == Variant::CheckpointAssistedSingleTrack ||
        *v == Variant::CheckpointAssistedParallelTrack) {
        opts.checkpoints_at_new_host = false;
        for (const CheckpointDecl& cc : sc.checkpoints)
            if (cc.query == d.query && cc.target == d.to) opts.checkpoints_at_new_host = true;
    }
    if (d.takeover_at_s >= 0) {
        opts.takeover_ts = ns_from_seconds(d.takeover_at_s);
    } else if (d.takeover_at_boundary) {
        const QueryDecl& q = query_decl(sc, d.query);
        double extent = q.window.extent_s; // validated: aggregate with extent > 0
        double edge = std::ceil((d.at_s + d.boundary_lead_s) / extent) * extent;
        opts.takeover_ts = ns_from_seconds(edge);
    }

    MigrationPlan plan = build_program(*v, opts);
    plan.ctx.query = nm.query.at(d.query);
    plan.ctx.coordinator = nm.node.at(d.coordinator);
    plan.ctx.new_host = nm.node.at(d.to);
    return plan;
}

// ---------------------------------------------------------------------------
// Decision daemon: replays per-host score series at a fixed period and
// triggers the configured migration when the cost-aware policy picks a rival.

struct DaemonState {
    Simulation* sim = nullptr;
    const Scenario* sc = nullptr;
    DecisionDecl decl;
    NameMaps nm;
    std::int32_t query = -1;
    std::vector<std::string> host_names;  // sorted by node id
    std::vector<std::int32_t> host_ids;
    std::vector<ScoreHistory> history;
    int check = 0;
    int migrations_done = 0;
};

double series_value(const std::vector<double>& series, int check) {
    if (series.empty()) return 0;
    std::size_t i = std::min<std::size_t>(static_cast<std::size_t>(check), series.size() - 1);
    return series[i];
}

// Predicted one-link transfer cost toward `to`, in predicted tuples processed
// while migrating vs while adapting; both scale with the same estimated input
// rate, so the ratio only needs the two durations.
double rival_cost(DaemonState& st, std::size_t idx, std::int32_t from_node) {
    const DecisionDecl& d = st.decl;
    std::int32_t to_node = st.host_ids[idx];

    std::int64_t bw = 0;
    double lat_s = 0;
    for (const LinkDecl& l : st.sc->links) {
        std::int32_t a = st.nm.node.at(l.a);
        std::int32_t b = st.nm.node.at(l.b);
        if ((a == from_node && b == to_node) || (a == to_node && b == from_node)) {
            bw = l.bandwidth_bps;
            lat_s = l.latency_s;
            break;
        }
    }
    if (bw <= 0) return 1.0; // unreachable host: maximal cost, benefit 0

    auto v = variant_from_name(d.variant);
    MigrationPlan probe = build_program(v.value_or(Variant::SingleTrackAllAtOnce));
    probe.ctx.query = st.query;
    probe.ctx.coordinator = st.nm.node.at(d.coordinator);
    probe.ctx.new_host = to_node;
    auto n_ctrl = st.sim->expected_control_for(probe, from_node);

    double mt = estimate_migration_time_s(st.sim->query_state_bytes(st.query), bw, lat_s,
                                          static_cast<int>(n_ctrl),
                                          st.sc->control_message_bytes);
    double at = adaptation_time(d.min_adaptation_s, d.max_adaptation_s, st.history[idx].rsd());
    double rate = st.sim->input_rate_estimate(st.query);
    return migration_cost(d.cost_weight, rate * mt, rate * at);
}

void run_check(const std::shared_ptr<DaemonState>& st) {
    const DecisionDecl& d = st->decl;
    int check = st->check++;

    for (std::size_t i = 0; i < st->host_ids.size(); ++i)
        st->history[i].push(series_value(d.scores.at(st->host_names[i]), check));

    bool migrating = st->sim->query_in_migration(st->query);
    std::int32_t current = st->sim->query_host(st->query);
    std::int32_t winner = current;
    if (!migrating) {
        std::vector<HostCandidate> cands;
        for (std::size_t i = 0; i < st->host_ids.size(); ++i) {
            HostCandidate c;
            c.node = st->host_ids[i];
            c.score = st->history[i].recent().back();
            c.cost = st->host_ids[i] == current ? 0.0 : rival_cost(*st, i, current);
            cands.push_back(c);
        }
        winner = select_host(cands, current);
    }

    LogEntry e;
    e.t = st->sim->now();
    e.kind = LogKind::DecisionCheck;
    e.node = winner;
    e.query = st->query;
    e.a = static_cast<std::uint64_t>(check);
    e.b = migrating ? 2 : (winner != current ? 1 : 0);
    st->sim->log().record(e);

    if (!migrating && winner != current && st->migrations_done < d.max_migrations) {
        MigrationDecl md;
        md.variant = d.variant;
        md.query = d.query;
        md.coordinator = d.coordinator;
        md.to = st->sc->nodes[static_cast<std::size_t>(winner)];
        md.at_s = seconds(st->sim->now());
        st->sim->trigger_migration_now(plan_from_decl(*st->sc, md, st->nm));
        ++st->migrations_done;
    }

    if (st->check < d.checks) {
        SimTime next = ns_from_seconds(d.start_s) +
                       static_cast<SimTime>(st->check) * ns_from_seconds(d.period_s);
        st->sim->add_event(next, [st] { run_check(st); });
    }
}

void install_decision(Simulation& sim, const Scenario& sc, const NameMaps& nm) {
    const DecisionDecl& d = *sc.decision;
    auto st = std::make_shared<DaemonState>();
    st->sim = &sim;
    st->sc = &sc;
    st->decl = d;
    st->nm = nm;
    st->query = nm.query.at(d.query);
    for (const auto& [host, series] : d.scores) {
        st->host_names.push_back(host);
        st->host_ids.push_back(nm.node.at(host));
    }
    // Sort candidates by node id so evaluation order is declaration-independent.
    std::vector<std::size_t> order(st->host_ids.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t x, std::size_t y) { return st->host_ids[x] < st->host_ids[y]; });
    std::vector<std::string> names;
    std::vector<std::int32_t> ids;
    for (std::size_t i : order) {
        names.push_back(st->host_names[i]);
        ids.push_back(st->host_ids[i]);
    }
    st->host_names = std::move(names);
    st->host_ids = std::move(ids);
    st->history.assign(st->host_ids.size(), ScoreHistory{});

    if (d.checks > 0) sim.add_event(ns_from_seconds(d.start_s), [st] { run_check(st); });
}

} // namespace

RunOutput run_scenario(const Scenario& sc, const RunConfig& cfg) {
    validate_scenario(sc);
    NameMaps nm = build_name_maps(sc);
    std::unique_ptr<Simulation> sim = build_simulation(sc, nm, cfg);

    SimTime workload_end = install_workload(*sim, sc, nm);

    for (const CheckpointDecl& cd : sc.checkpoints) {
        CheckpointConfig cc;
        cc.query = nm.query.at(cd.query);
        cc.interval = ns_from_seconds(cd.interval_s);
        cc.target = nm.node.at(cd.target);
        // Default horizon: checkpoints past the last emission carry nothing,
        // and an unbounded daemon would keep the run alive forever.
        cc.until = cd.until_s >= 0 ? ns_from_seconds(cd.until_s) : workload_end;
        sim->configure_checkpoints(cc);
    }

    if (cfg.enable_migrations) {
        for (const MigrationDecl& md : sc.migrations)
            sim->trigger_migration_at(ns_from_seconds(md.at_s), plan_from_decl(sc, md, nm));
        if (sc.decision) install_decision(*sim, sc, nm);
    }

    RunResult rr = sim->run();

    RunOutput out;
    out.end_time = rr.end_time;
    out.sink_records = std::move(rr.sink_records);
    out.outcomes = std::move(rr.migrations);
    out.metrics = compute_all_metrics(sim->log());
    for (MetricsRecord& m : out.metrics)
        for (const MigrationOutcome& o : out.outcomes)
            if (o.id == m.migration_id) {
                m.variant = o.variant;
                m.status = o.status;
            }
    out.counters = sim->log().counters();
    out.log_digest = sim->log().digest();
    out.log_entries = sim->log().entries();
    return out;
}

OutputJoin join_outputs(const std::vector<SinkRecord>& baseline,
                        const std::vector<SinkRecord>& migrated) {
    using Key = std::tuple<std::int32_t, std::int32_t, std::uint64_t>;
    std::map<Key, const SinkRecord*> base;
    for (const SinkRecord& r : baseline)
        base[{r.node, r.tuple.stream, r.tuple.seq}] = &r;

    OutputJoin j;
    double sum = 0;
    for (const SinkRecord& r : migrated) {
        auto it = base.find({r.node, r.tuple.stream, r.tuple.seq});
        if (it == base.end()) {
            ++j.extra;
            continue;
        }
        if (!(it->second->tuple == r.tuple)) ++j.mismatched;
        ++j.matched;
        double added = seconds(r.arrival - it->second->arrival);
        if (added > 1e-12) {
            ++j.latency.affected_outputs;
            sum += added;
            j.latency.max_added_s = std::max(j.latency.max_added_s, added);
        }
        base.erase(it);
    }
    j.missing = base.size();
    j.latency.outputs_compared = j.matched;
    if (j.latency.affected_outputs > 0)
        j.latency.mean_added_s = sum / static_cast<double>(j.latency.affected_outputs);
    j.equivalent = j.missing == 0 && j.extra == 0 && j.mismatched == 0;
    return j;
}

CompareOutput run_compare(const Scenario& sc, const RunConfig& cfg) {
    CompareOutput out;
    RunConfig base_cfg = cfg;
    base_cfg.enable_migrations = false;
    out.baseline = run_scenario(sc, base_cfg);
    RunConfig mig_cfg = cfg;
    mig_cfg.enable_migrations = true;
    out.migrated = run_scenario(sc, mig_cfg);
    out.join = join_outputs(out.baseline.sink_records, out.migrated.sink_records);
    return out;
}

} // namespace migrasim
