#include "migrasim/scenario.hpp"

#include <cmath>
#include <set>
#include <utility>

#include <nlohmann/json.hpp>

#include "migrasim/time.hpp"

namespace migrasim {
namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& msg) {
    throw ScenarioError(path + ": " + msg);
}

// Tracks which keys of one JSON object were consumed so leftovers can be
// rejected with their full path.
class Fields {
  public:
    Fields(const json& j, std::string path) : j_(&j), path_(std::move(path)) {
        if (!j.is_object()) fail(path_, "expected an object");
    }

    const json* get(const char* name) {
        seen_.insert(name);
        auto it = j_->find(name);
        return it == j_->end() ? nullptr : &*it;
    }

    const json& require(const char* name) {
        const json* p = get(name);
        if (!p) fail(path_ + "." + name, "missing required field");
        return *p;
    }

    void finish() {
        for (const auto& item : j_->items())
            if (!seen_.count(item.key())) fail(path_ + "." + item.key(), "unknown field");
    }

    const std::string& path() const { return path_; }

  private:
    const json* j_;
    std::string path_;
    std::set<std::string> seen_;
};

std::string get_string(const json& j, const std::string& path) {
    if (!j.is_string()) fail(path, "expected a string");
    return j.get<std::string>();
}

double get_double(const json& j, const std::string& path) {
    if (!j.is_number()) fail(path, "expected a number");
    return j.get<double>();
}

std::int64_t get_int64(const json& j, const std::string& path) {
    if (!j.is_number_integer() && !j.is_number_unsigned()) fail(path, "expected an integer");
    return j.get<std::int64_t>();
}

std::uint64_t get_uint64(const json& j, const std::string& path) {
    if (j.is_number_unsigned()) return j.get<std::uint64_t>();
    if (j.is_number_integer()) {
        std::int64_t v = j.get<std::int64_t>();
        if (v < 0) fail(path, "expected a non-negative integer");
        return static_cast<std::uint64_t>(v);
    }
    fail(path, "expected a non-negative integer");
}

bool get_bool(const json& j, const std::string& path) {
    if (!j.is_boolean()) fail(path, "expected a boolean");
    return j.get<bool>();
}

const json& get_array(const json& j, const std::string& path) {
    if (!j.is_array()) fail(path, "expected an array");
    return j;
}

std::string idx(const std::string& base, std::size_t i) {
    return base + "[" + std::to_string(i) + "]";
}

// --- element parsers --------------------------------------------------------

KeySpec parse_key(const json& j, const std::string& path) {
    Fields f(j, path);
    KeySpec k;
    int forms = 0;
    if (const json* p = f.get("constant")) {
        k.kind = KeySpec::Kind::Constant;
        k.a = get_int64(*p, path + ".constant");
        ++forms;
    }
    if (const json* p = f.get("cycle")) {
        k.kind = KeySpec::Kind::Cycle;
        k.a = get_int64(*p, path + ".cycle");
        ++forms;
    }
    if (const json* p = f.get("uniform")) {
        const json& arr = get_array(*p, path + ".uniform");
        if (arr.size() != 2) fail(path + ".uniform", "expected [low, high]");
        k.kind = KeySpec::Kind::Uniform;
        k.a = get_int64(arr[0], path + ".uniform[0]");
        k.b = get_int64(arr[1], path + ".uniform[1]");
        ++forms;
    }
    if (forms != 1) fail(path, "expected exactly one of constant | cycle | uniform");
    f.finish();
    return k;
}

PayloadSpec parse_payload(const json& j, const std::string& path) {
    Fields f(j, path);
    PayloadSpec p;
    int forms = 0;
    if (const json* q = f.get("bytes")) {
        p.kind = PayloadSpec::Kind::Constant;
        p.a = static_cast<std::uint32_t>(get_uint64(*q, path + ".bytes"));
        ++forms;
    }
    if (const json* q = f.get("uniform")) {
        const json& arr = get_array(*q, path + ".uniform");
        if (arr.size() != 2) fail(path + ".uniform", "expected [low, high]");
        p.kind = PayloadSpec::Kind::Uniform;
        p.a = static_cast<std::uint32_t>(get_uint64(arr[0], path + ".uniform[0]"));
        p.b = static_cast<std::uint32_t>(get_uint64(arr[1], path + ".uniform[1]"));
        ++forms;
    }
    if (forms != 1) fail(path, "expected exactly one of bytes | uniform");
    f.finish();
    return p;
}

WorkloadPhase parse_phase(const json& j, const std::string& path) {
    Fields f(j, path);
    WorkloadPhase ph;
    ph.start_s = get_double(f.require("start_s"), path + ".start_s");
    ph.rate_per_s = get_double(f.require("rate_per_s"), path + ".rate_per_s");
    ph.count = get_uint64(f.require("count"), path + ".count");
    if (const json* p = f.get("key")) ph.key = parse_key(*p, path + ".key");
    if (const json* p = f.get("payload")) ph.payload = parse_payload(*p, path + ".payload");
    if (const json* p = f.get("jitter_ns")) ph.jitter_ns = get_int64(*p, path + ".jitter_ns");
    f.finish();
    return ph;
}

Emission parse_emission(const json& j, const std::string& path) {
    Fields f(j, path);
    Emission e;
    e.t = ns_from_seconds(get_double(f.require("t_s"), path + ".t_s"));
    e.key = get_int64(f.require("key"), path + ".key");
    if (const json* p = f.get("payload_bytes"))
        e.payload_bytes = static_cast<std::uint32_t>(get_uint64(*p, path + ".payload_bytes"));
    f.finish();
    return e;
}

// --- serialization ----------------------------------------------------------

json key_to_json(const KeySpec& k) {
    switch (k.kind) {
    case KeySpec::Kind::Constant: return json{{"constant", k.a}};
    case KeySpec::Kind::Cycle: return json{{"cycle", k.a}};
    case KeySpec::Kind::Uniform: return json{{"uniform", json::array({k.a, k.b})}};
    }
    return json::object();
}

json payload_to_json(const PayloadSpec& p) {
    if (p.kind == PayloadSpec::Kind::Constant) return json{{"bytes", p.a}};
    return json{{"uniform", json::array({p.a, p.b})}};
}

} // namespace

Scenario scenario_from_json_text(const std::string& text) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::exception& e) {
        throw ScenarioError(std::string("invalid JSON: ") + e.what());
    }

    Fields f(root, "$");
    std::string format = get_string(f.require("format"), "$.format");
    if (format != "migrasim-scenario/1")
        fail("$.format", "unsupported format \"" + format + "\" (expected migrasim-scenario/1)");

    Scenario sc;
    if (const json* p = f.get("name")) sc.name = get_string(*p, "$.name");
    if (const json* p = f.get("seed")) sc.seed = get_uint64(*p, "$.seed");
    if (const json* p = f.get("control_message_bytes"))
        sc.control_message_bytes = get_int64(*p, "$.control_message_bytes");
    if (const json* p = f.get("max_events")) sc.max_events = get_uint64(*p, "$.max_events");

    for (std::size_t i = 0; const json& n : get_array(f.require("nodes"), "$.nodes")) {
        sc.nodes.push_back(get_string(n, idx("$.nodes", i)));
        ++i;
    }

    for (std::size_t i = 0; const json& l : get_array(f.require("links"), "$.links")) {
        std::string path = idx("$.links", i++);
        Fields lf(l, path);
        LinkDecl d;
        d.a = get_string(lf.require("a"), path + ".a");
        d.b = get_string(lf.require("b"), path + ".b");
        double mbps = get_double(lf.require("bandwidth_mbps"), path + ".bandwidth_mbps");
        if (!(mbps > 0)) fail(path + ".bandwidth_mbps", "must be positive");
        d.bandwidth_bps = static_cast<std::int64_t>(std::llround(mbps * 1e6));
        d.latency_s = get_double(lf.require("latency_ms"), path + ".latency_ms") / 1e3;
        lf.finish();
        sc.links.push_back(std::move(d));
    }

    for (std::size_t i = 0; const json& s : get_array(f.require("streams"), "$.streams")) {
        std::string path = idx("$.streams", i++);
        Fields sf(s, path);
        StreamDecl d;
        d.name = get_string(sf.require("name"), path + ".name");
        if (const json* p = sf.get("source")) d.source = get_string(*p, path + ".source");
        sf.finish();
        sc.streams.push_back(std::move(d));
    }

    for (std::size_t i = 0; const json& q : get_array(f.require("queries"), "$.queries")) {
        std::string path = idx("$.queries", i++);
        Fields qf(q, path);
        QueryDecl d;
        d.name = get_string(qf.require("name"), path + ".name");
        d.kind = get_string(qf.require("kind"), path + ".kind");
        for (std::size_t k = 0;
             const json& in : get_array(qf.require("inputs"), path + ".inputs")) {
            d.inputs.push_back(get_string(in, idx(path + ".inputs", k)));
            ++k;
        }
        d.output = get_string(qf.require("output"), path + ".output");
        d.host = get_string(qf.require("host"), path + ".host");
        if (const json* p = qf.get("window")) {
            std::string wpath = path + ".window";
            Fields wf(*p, wpath);
            d.window.extent_s = get_double(wf.require("extent_s"), wpath + ".extent_s");
            if (const json* sp = wf.get("slide_s"))
                d.window.slide_s = get_double(*sp, wpath + ".slide_s");
            wf.finish();
        }
        if (const json* p = qf.get("pass_every")) d.pass_every = get_int64(*p, path + ".pass_every");
        qf.finish();
        sc.queries.push_back(std::move(d));
    }

    if (const json* sinks = f.get("sinks")) {
        for (std::size_t i = 0; const json& s : get_array(*sinks, "$.sinks")) {
            std::string path = idx("$.sinks", i++);
            Fields sf(s, path);
            SinkDecl d;
            d.stream = get_string(sf.require("stream"), path + ".stream");
            d.node = get_string(sf.require("node"), path + ".node");
            sf.finish();
            sc.sinks.push_back(std::move(d));
        }
    }

    if (const json* wl = f.get("workload")) {
        for (std::size_t i = 0; const json& w : get_array(*wl, "$.workload")) {
            std::string path = idx("$.workload", i++);
            Fields wf(w, path);
            SourceDecl d;
            d.stream = get_string(wf.require("stream"), path + ".stream");
            if (const json* p = wf.get("phases")) {
                for (std::size_t k = 0; const json& ph : get_array(*p, path + ".phases")) {
                    d.phases.push_back(parse_phase(ph, idx(path + ".phases", k)));
                    ++k;
                }
            }
            if (const json* p = wf.get("extra")) {
                for (std::size_t k = 0; const json& e : get_array(*p, path + ".extra")) {
                    d.extra.push_back(parse_emission(e, idx(path + ".extra", k)));
                    ++k;
                }
            }
            wf.finish();
            sc.workload.push_back(std::move(d));
        }
    }

    if (const json* cps = f.get("checkpoints")) {
        for (std::size_t i = 0; const json& c : get_array(*cps, "$.checkpoints")) {
            std::string path = idx("$.checkpoints", i++);
            Fields cf(c, path);
            CheckpointDecl d;
            d.query = get_string(cf.require("query"), path + ".query");
            d.interval_s = get_double(cf.require("interval_s"), path + ".interval_s");
            d.target = get_string(cf.require("target"), path + ".target");
            if (const json* p = cf.get("until_s")) d.until_s = get_double(*p, path + ".until_s");
            cf.finish();
            sc.checkpoints.push_back(std::move(d));
        }
    }

    if (const json* migs = f.get("migrations")) {
        for (std::size_t i = 0; const json& m : get_array(*migs, "$.migrations")) {
            std::string path = idx("$.migrations", i++);
            Fields mf(m, path);
            MigrationDecl d;
            d.at_s = get_double(mf.require("at_s"), path + ".at_s");
            d.variant = get_string(mf.require("variant"), path + ".variant");
            d.query = get_string(mf.require("query"), path + ".query");
            d.to = get_string(mf.require("to"), path + ".to");
            d.coordinator = get_string(mf.require("coordinator"), path + ".coordinator");
            if (const json* p = mf.get("buffer_at_upstream"))
                d.buffer_at_upstream = get_bool(*p, path + ".buffer_at_upstream");
            if (const json* p = mf.get("max_chunk_bytes"))
                d.max_chunk_bytes = get_uint64(*p, path + ".max_chunk_bytes");
            if (const json* p = mf.get("takeover_margin_s"))
                d.takeover_margin_s = get_double(*p, path + ".takeover_margin_s");
            if (const json* p = mf.get("takeover_at_s"))
                d.takeover_at_s = get_double(*p, path + ".takeover_at_s");
            if (const json* p = mf.get("takeover_at_boundary"))
                d.takeover_at_boundary = get_bool(*p, path + ".takeover_at_boundary");
            if (const json* p = mf.get("boundary_lead_s"))
                d.boundary_lead_s = get_double(*p, path + ".boundary_lead_s");
            if (const json* p = mf.get("consistency_waiver"))
                d.consistency_waiver = get_bool(*p, path + ".consistency_waiver");
            mf.finish();
            sc.migrations.push_back(std::move(d));
        }
    }

    if (const json* dec = f.get("decision")) {
        std::string path = "$.decision";
        Fields df(*dec, path);
        DecisionDecl d;
        d.start_s = get_double(df.require("start_s"), path + ".start_s");
        d.period_s = get_double(df.require("period_s"), path + ".period_s");
        d.checks = static_cast<int>(get_int64(df.require("checks"), path + ".checks"));
        d.query = get_string(df.require("query"), path + ".query");
        d.coordinator = get_string(df.require("coordinator"), path + ".coordinator");
        if (const json* p = df.get("variant")) d.variant = get_string(*p, path + ".variant");
        if (const json* p = df.get("max_migrations"))
            d.max_migrations = static_cast<int>(get_int64(*p, path + ".max_migrations"));
        if (const json* p = df.get("min_adaptation_s"))
            d.min_adaptation_s = get_double(*p, path + ".min_adaptation_s");
        if (const json* p = df.get("max_adaptation_s"))
            d.max_adaptation_s = get_double(*p, path + ".max_adaptation_s");
        if (const json* p = df.get("cost_weight"))
            d.cost_weight = get_double(*p, path + ".cost_weight");
        const json& scores = df.require("scores");
        if (!scores.is_object()) fail(path + ".scores", "expected an object");
        for (const auto& item : scores.items()) {
            std::string spath = path + ".scores." + item.key();
            std::vector<double> series;
            for (std::size_t k = 0; const json& v : get_array(item.value(), spath)) {
                series.push_back(get_double(v, idx(spath, k)));
                ++k;
            }
            d.scores[item.key()] = std::move(series);
        }
        df.finish();
        sc.decision = std::move(d);
    }

    f.finish();
    validate_scenario(sc);
    return sc;
}

std::string scenario_to_json_text(const Scenario& sc) {
    json root;
    root["format"] = "migrasim-scenario/1";
    root["name"] = sc.name;
    root["seed"] = sc.seed;
    root["control_message_bytes"] = sc.control_message_bytes;
    root["max_events"] = sc.max_events;
    root["nodes"] = sc.nodes;

    json links = json::array();
    for (const LinkDecl& l : sc.links) {
        json j;
        j["a"] = l.a;
        j["b"] = l.b;
        j["bandwidth_mbps"] = static_cast<double>(l.bandwidth_bps) / 1e6;
        j["latency_ms"] = l.latency_s * 1e3;
        links.push_back(std::move(j));
    }
    root["links"] = std::move(links);

    json streams = json::array();
    for (const StreamDecl& s : sc.streams) {
        json j;
        j["name"] = s.name;
        if (!s.source.empty()) j["source"] = s.source;
        streams.push_back(std::move(j));
    }
    root["streams"] = std::move(streams);

    json queries = json::array();
    for (const QueryDecl& q : sc.queries) {
        json j;
        j["name"] = q.name;
        j["kind"] = q.kind;
        j["inputs"] = q.inputs;
        j["output"] = q.output;
        j["host"] = q.host;
        if (q.kind == "aggregate") {
            json w;
            w["extent_s"] = q.window.extent_s;
            if (q.window.slide_s > 0) w["slide_s"] = q.window.slide_s;
            j["window"] = std::move(w);
        }
        if (q.pass_every != 1) j["pass_every"] = q.pass_every;
        queries.push_back(std::move(j));
    }
    root["queries"] = std::move(queries);

    json sinks = json::array();
    for (const SinkDecl& s : sc.sinks) sinks.push_back(json{{"stream", s.stream}, {"node", s.node}});
    root["sinks"] = std::move(sinks);

    json workload = json::array();
    for (const SourceDecl& w : sc.workload) {
        json j;
        j["stream"] = w.stream;
        json phases = json::array();
        for (const WorkloadPhase& p : w.phases) {
            json pj;
            pj["start_s"] = p.start_s;
            pj["rate_per_s"] = p.rate_per_s;
            pj["count"] = p.count;
            pj["key"] = key_to_json(p.key);
            pj["payload"] = payload_to_json(p.payload);
            if (p.jitter_ns > 0) pj["jitter_ns"] = p.jitter_ns;
            phases.push_back(std::move(pj));
        }
        j["phases"] = std::move(phases);
        if (!w.extra.empty()) {
            json extra = json::array();
            for (const Emission& e : w.extra) {
                json ej;
                ej["t_s"] = seconds(e.t);
                ej["key"] = e.key;
                if (e.payload_bytes > 0) ej["payload_bytes"] = e.payload_bytes;
                extra.push_back(std::move(ej));
            }
            j["extra"] = std::move(extra);
        }
        workload.push_back(std::move(j));
    }
    root["workload"] = std::move(workload);

    if (!sc.checkpoints.empty()) {
        json cps = json::array();
        for (const CheckpointDecl& c : sc.checkpoints) {
            json j;
            j["query"] = c.query;
            j["interval_s"] = c.interval_s;
            j["target"] = c.target;
            if (c.until_s >= 0) j["until_s"] = c.until_s;
            cps.push_back(std::move(j));
        }
        root["checkpoints"] = std::move(cps);
    }

    if (!sc.migrations.empty()) {
        json migs = json::array();
        for (const MigrationDecl& m : sc.migrations) {
            json j;
            j["at_s"] = m.at_s;
            j["variant"] = m.variant;
            j["query"] = m.query;
            j["to"] = m.to;
            j["coordinator"] = m.coordinator;
            if (m.buffer_at_upstream) j["buffer_at_upstream"] = true;
            if (m.max_chunk_bytes > 0) j["max_chunk_bytes"] = m.max_chunk_bytes;
            if (m.takeover_margin_s >= 0) j["takeover_margin_s"] = m.takeover_margin_s;
            if (m.takeover_at_s >= 0) j["takeover_at_s"] = m.takeover_at_s;
            if (m.takeover_at_boundary) {
                j["takeover_at_boundary"] = true;
                j["boundary_lead_s"] = m.boundary_lead_s;
            }
            if (m.consistency_waiver) j["consistency_waiver"] = true;
            migs.push_back(std::move(j));
        }
        root["migrations"] = std::move(migs);
    }

    if (sc.decision) {
        const DecisionDecl& d = *sc.decision;
        json j;
        j["start_s"] = d.start_s;
        j["period_s"] = d.period_s;
        j["checks"] = d.checks;
        j["query"] = d.query;
        j["coordinator"] = d.coordinator;
        j["variant"] = d.variant;
        j["max_migrations"] = d.max_migrations;
        j["min_adaptation_s"] = d.min_adaptation_s;
        j["max_adaptation_s"] = d.max_adaptation_s;
        j["cost_weight"] = d.cost_weight;
        json scores = json::object();
        for (const auto& [host, series] : d.scores) scores[host] = series;
        j["scores"] = std::move(scores);
        root["decision"] = std::move(j);
    }

    return root.dump(2) + "\n";
}

namespace {

template <typename T>
void check_unique_names(const std::vector<T>& items, const std::string& what,
                        const std::string& base) {
    std::set<std::string> seen;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (items[i].name.empty()) fail(idx(base, i) + ".name", what + " name must not be empty");
        if (!seen.insert(items[i].name).second)
            fail(idx(base, i) + ".name", "duplicate " + what + " name \"" + items[i].name + "\"");
    }
}

} // namespace

void validate_scenario(const Scenario& sc) {
    if (sc.nodes.empty()) fail("$.nodes", "at least one node is required");
    std::set<std::string> nodes;
    for (std::size_t i = 0; i < sc.nodes.size(); ++i) {
        if (sc.nodes[i].empty()) fail(idx("$.nodes", i), "node name must not be empty");
        if (!nodes.insert(sc.nodes[i]).second)
            fail(idx("$.nodes", i), "duplicate node name \"" + sc.nodes[i] + "\"");
    }
    auto known_node = [&](const std::string& n, const std::string& path) {
        if (!nodes.count(n)) fail(path, "unknown node \"" + n + "\"");
    };

    std::set<std::pair<std::string, std::string>> link_pairs;
    for (std::size_t i = 0; i < sc.links.size(); ++i) {
        const LinkDecl& l = sc.links[i];
        std::string path = idx("$.links", i);
        known_node(l.a, path + ".a");
        known_node(l.b, path + ".b");
        if (l.a == l.b) fail(path, "link endpoints must differ");
        if (l.bandwidth_bps <= 0) fail(path + ".bandwidth_mbps", "must be positive");
        if (l.latency_s < 0) fail(path + ".latency_ms", "must be non-negative");
        auto pair = std::minmax(l.a, l.b);
        if (!link_pairs.insert({pair.first, pair.second}).second)
            fail(path, "duplicate link between \"" + l.a + "\" and \"" + l.b + "\"");
    }

    check_unique_names(sc.streams, "stream", "$.streams");
    std::map<std::string, const StreamDecl*> streams;
    for (const StreamDecl& s : sc.streams) streams[s.name] = &s;
    for (std::size_t i = 0; i < sc.streams.size(); ++i)
        if (!sc.streams[i].source.empty())
            known_node(sc.streams[i].source, idx("$.streams", i) + ".source");
    auto known_stream = [&](const std::string& n, const std::string& path) {
        if (!streams.count(n)) fail(path, "unknown stream \"" + n + "\"");
    };

    check_unique_names(sc.queries, "query", "$.queries");
    std::map<std::string, const QueryDecl*> queries;
    std::set<std::string> consumed;
    std::set<std::string> produced;
    for (std::size_t i = 0; i < sc.queries.size(); ++i) {
        const QueryDecl& q = sc.queries[i];
        std::string path = idx("$.queries", i);
        queries[q.name] = &q;
        if (q.kind != "filter" && q.kind != "join" && q.kind != "aggregate")
            fail(path + ".kind", "expected filter | join | aggregate, got \"" + q.kind + "\"");
        std::size_t want = q.kind == "join" ? 2 : 1;
        if (q.inputs.size() != want)
            fail(path + ".inputs", q.kind + " takes exactly " + std::to_string(want) +
                                       " input stream" + (want == 1 ? "" : "s"));
        for (std::size_t k = 0; k < q.inputs.size(); ++k) {
            known_stream(q.inputs[k], idx(path + ".inputs", k));
            if (!consumed.insert(q.inputs[k]).second)
                fail(idx(path + ".inputs", k),
                     "stream \"" + q.inputs[k] + "\" already feeds another query");
        }
        if (q.kind == "join" && q.inputs[0] == q.inputs[1])
            fail(path + ".inputs", "join inputs must differ");
        known_stream(q.output, path + ".output");
        if (!streams.at(q.output)->source.empty())
            fail(path + ".output", "stream \"" + q.output + "\" already has a source node");
        if (!produced.insert(q.output).second)
            fail(path + ".output", "stream \"" + q.output + "\" is produced by another query");
        for (const std::string& in : q.inputs)
            if (in == q.output) fail(path + ".output", "query output must differ from its inputs");
        known_node(q.host, path + ".host");
        if (q.kind == "aggregate") {
            if (!(q.window.extent_s > 0)) fail(path + ".window.extent_s", "must be positive");
            if (q.window.slide_s < 0) fail(path + ".window.slide_s", "must be non-negative");
            if (q.window.slide_s > 0) {
                SimTime extent = ns_from_seconds(q.window.extent_s);
                SimTime slide = ns_from_seconds(q.window.slide_s);
                if (slide > extent)
                    fail(path + ".window.slide_s", "slide must not exceed the extent");
                if (extent % slide != 0)
                    fail(path + ".window.slide_s", "extent must be a multiple of the slide");
            }
        }
        if (q.pass_every < 1) fail(path + ".pass_every", "must be at least 1");
    }

    std::set<std::pair<std::string, std::string>> sink_pairs;
    for (std::size_t i = 0; i < sc.sinks.size(); ++i) {
        const SinkDecl& s = sc.sinks[i];
        std::string path = idx("$.sinks", i);
        known_stream(s.stream, path + ".stream");
        known_node(s.node, path + ".node");
        if (!sink_pairs.insert({s.stream, s.node}).second)
            fail(path, "duplicate sink for stream \"" + s.stream + "\" on \"" + s.node + "\"");
    }

    for (std::size_t i = 0; i < sc.workload.size(); ++i) {
        const SourceDecl& w = sc.workload[i];
        std::string path = idx("$.workload", i);
        known_stream(w.stream, path + ".stream");
        if (streams.at(w.stream)->source.empty())
            fail(path + ".stream", "stream \"" + w.stream + "\" has no source node");
        if (w.phases.empty() && w.extra.empty())
            fail(path, "workload entry has neither phases nor extra emissions");
        for (std::size_t k = 0; k < w.phases.size(); ++k) {
            const WorkloadPhase& p = w.phases[k];
            std::string ppath = idx(path + ".phases", k);
            if (p.start_s < 0) fail(ppath + ".start_s", "must be non-negative");
            if (p.count > 0 && !(p.rate_per_s > 0)) fail(ppath + ".rate_per_s", "must be positive");
            if (p.key.kind == KeySpec::Kind::Cycle && p.key.a < 1)
                fail(ppath + ".key.cycle", "must be at least 1");
            if (p.key.kind == KeySpec::Kind::Uniform && p.key.a > p.key.b)
                fail(ppath + ".key.uniform", "low must not exceed high");
            if (p.payload.kind == PayloadSpec::Kind::Uniform && p.payload.a > p.payload.b)
                fail(ppath + ".payload.uniform", "low must not exceed high");
            if (p.jitter_ns < 0) fail(ppath + ".jitter_ns", "must be non-negative");
        }
    }

    for (std::size_t i = 0; i < sc.checkpoints.size(); ++i) {
        const CheckpointDecl& c = sc.checkpoints[i];
        std::string path = idx("$.checkpoints", i);
        if (!queries.count(c.query)) fail(path + ".query", "unknown query \"" + c.query + "\"");
        if (!(c.interval_s > 0)) fail(path + ".interval_s", "must be positive");
        known_node(c.target, path + ".target");
        if (queries.at(c.query)->host == c.target)
            fail(path + ".target", "checkpoint target equals the query's initial host");
    }

    for (std::size_t i = 0; i < sc.migrations.size(); ++i) {
        const MigrationDecl& m = sc.migrations[i];
        std::string path = idx("$.migrations", i);
        if (m.at_s < 0) fail(path + ".at_s", "must be non-negative");
        auto v = variant_from_name(m.variant);
        if (!v) fail(path + ".variant", "unknown variant \"" + m.variant + "\"");
        if (!queries.count(m.query)) fail(path + ".query", "unknown query \"" + m.query + "\"");
        const QueryDecl& q = *queries.at(m.query);
        known_node(m.to, path + ".to");
        known_node(m.coordinator, path + ".coordinator");
        if (m.takeover_at_s >= 0 && m.takeover_at_boundary)
            fail(path, "takeover_at_s and takeover_at_boundary are mutually exclusive");
        if (m.takeover_at_s >= 0 && m.takeover_at_s < m.at_s)
            fail(path + ".takeover_at_s", "takeover must not precede the trigger");
        if (m.takeover_at_boundary) {
            if (q.kind != "aggregate")
                fail(path + ".takeover_at_boundary", "window boundaries need an aggregate query");
            if (!(m.boundary_lead_s >= 0)) fail(path + ".boundary_lead_s", "must be non-negative");
        }
        if (*v == Variant::WindowRecreation && q.kind == "join" && !m.consistency_waiver)
            fail(path + ".variant",
                 "window-recreation cannot rebuild join state (unbounded lookback); set "
                 "consistency_waiver to accept missing outputs");
    }

    if (sc.decision) {
        const DecisionDecl& d = *sc.decision;
        std::string path = "$.decision";
        if (d.start_s < 0) fail(path + ".start_s", "must be non-negative");
        if (!(d.period_s > 0)) fail(path + ".period_s", "must be positive");
        if (d.checks < 1) fail(path + ".checks", "must be at least 1");
        if (!queries.count(d.query)) fail(path + ".query", "unknown query \"" + d.query + "\"");
        known_node(d.coordinator, path + ".coordinator");
        if (!variant_from_name(d.variant))
            fail(path + ".variant", "unknown variant \"" + d.variant + "\"");
        if (d.max_migrations < 0) fail(path + ".max_migrations", "must be non-negative");
        if (d.min_adaptation_s < 0) fail(path + ".min_adaptation_s", "must be non-negative");
        if (d.max_adaptation_s < d.min_adaptation_s)
            fail(path + ".max_adaptation_s", "must be at least min_adaptation_s");
        if (d.cost_weight < 0) fail(path + ".cost_weight", "must be non-negative");
        if (d.scores.size() < 2) fail(path + ".scores", "need at least two candidate hosts");
        for (const auto& [host, series] : d.scores) {
            known_node(host, path + ".scores." + host);
            if (series.empty()) fail(path + ".scores." + host, "score series must not be empty");
        }
        if (!d.scores.count(queries.at(d.query)->host))
            fail(path + ".scores",
                 "the query's initial host \"" + queries.at(d.query)->host +
                     "\" must be among the candidates");
    }
}

} // namespace migrasim
