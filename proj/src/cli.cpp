#include "migrasim/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "migrasim/decision.hpp"
#include "migrasim/runner.hpp"

namespace migrasim {

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitInvalid = 2;
constexpr int kExitMismatch = 3;

// MIGRASIM_LOG: "" silent, "info" summaries, "debug" + metrics, "trace" + log.
int log_level() {
    const char* v = std::getenv("MIGRASIM_LOG");
    if (v == nullptr || *v == '\0') return 0;
    const std::string s = v;
    if (s == "info") return 1;
    if (s == "debug") return 2;
    if (s == "trace") return 3;
    return 1;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ScenarioError("cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << content;
    if (!out.flush()) throw std::runtime_error("cannot write " + path.string());
}

void diagnostics(const RunOutput& run, const std::string& label) {
    const int lvl = log_level();
    if (lvl < 1) return;
    std::cerr << "[migrasim] " << label << ": " << run.sink_records.size() << " outputs, "
              << run.outcomes.size() << " migrations, end " << format_seconds(seconds(run.end_time))
              << " s\n";
    if (lvl >= 2) {
        for (const MetricsRecord& m : run.metrics) {
            std::cerr << "[migrasim]   migration " << m.migration_id << " " << m.variant << " "
                      << m.status << " freeze " << format_seconds(m.freeze_s) << " s, moved "
                      << m.state_moved_bytes << " B\n";
        }
    }
    if (lvl >= 3) {
        for (const LogEntry& e : run.log_entries) {
            std::cerr << "[migrasim]     " << format_seconds(seconds(e.t)) << " "
                      << log_kind_name(e.kind) << " node=" << e.node << " mig=" << e.migration
                      << " q=" << e.query << " s=" << e.stream << " a=" << e.a << " b=" << e.b
                      << "\n";
        }
    }
}

nlohmann::json parse_json(const std::string& text, const std::string& what) {
    try {
        return nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ScenarioError(what + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------
// Decision scenarios ("migrasim-decide/1"): candidate hosts with either a
// direct processing-ratio cost or link/state parameters to estimate it, plus
// per-check oracle scores.

struct DecideScenario {
    DecideConfig config;
    std::vector<std::string> host_names; // declaration order
};

void reject_unknown(const nlohmann::json& obj, const std::set<std::string>& allowed,
                    const std::string& where) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        if (!allowed.count(it.key())) {
            throw ScenarioError(where + ": unknown field '" + it.key() + "'");
        }
    }
}

double number_at(const nlohmann::json& obj, const std::string& key, const std::string& where,
                 double fallback, bool required = false) {
    auto it = obj.find(key);
    if (it == obj.end()) {
        if (required) throw ScenarioError(where + "." + key + ": required");
        return fallback;
    }
    if (!it->is_number()) throw ScenarioError(where + "." + key + ": expected a number");
    return it->get<double>();
}

DecideScenario decide_from_json_text(const std::string& text) {
    const nlohmann::json j = parse_json(text, "decision scenario");
    if (!j.is_object()) throw ScenarioError("$: expected an object");
    reject_unknown(j, {"format", "current_host", "cost_weight", "min_adaptation_s",
                       "max_adaptation_s", "hosts", "checks"},
                   "$");
    if (!j.contains("format") || j.at("format") != "migrasim-decide/1") {
        throw ScenarioError("$.format: expected \"migrasim-decide/1\"");
    }

    const double default_weight = number_at(j, "cost_weight", "$", 1.0);
    const double min_at = number_at(j, "min_adaptation_s", "$", 5.0);
    const double max_at = number_at(j, "max_adaptation_s", "$", 15.0);

    DecideScenario out;
    if (!j.contains("hosts") || !j.at("hosts").is_array() || j.at("hosts").empty()) {
        throw ScenarioError("$.hosts: expected a non-empty array");
    }
    std::map<std::string, std::int32_t> ids;
    std::int32_t next = 0;
    for (const auto& hj : j.at("hosts")) {
        const std::string where = "$.hosts[" + std::to_string(next) + "]";
        if (!hj.is_object()) throw ScenarioError(where + ": expected an object");
        reject_unknown(hj, {"name", "cost_ratio", "cost_weight", "link"}, where);
        if (!hj.contains("name") || !hj.at("name").is_string()) {
            throw ScenarioError(where + ".name: required string");
        }
        DecideHost h;
        h.node = next;
        h.name = hj.at("name").get<std::string>();
        if (h.name.empty()) throw ScenarioError(where + ".name: must not be empty");
        if (!ids.emplace(h.name, h.node).second) {
            throw ScenarioError(where + ".name: duplicate host '" + h.name + "'");
        }
        h.cost_weight = number_at(hj, "cost_weight", where, default_weight);
        if (h.cost_weight < 0) throw ScenarioError(where + ".cost_weight: must be >= 0");

        const bool has_ratio = hj.contains("cost_ratio");
        const bool has_link = hj.contains("link");
        if (has_ratio && has_link) {
            throw ScenarioError(where + ": give either cost_ratio or link, not both");
        }
        if (has_ratio) {
            h.base_cost = number_at(hj, "cost_ratio", where, 0.0, true);
            if (h.base_cost < 0) throw ScenarioError(where + ".cost_ratio: must be >= 0");
        } else if (has_link) {
            const nlohmann::json& lj = hj.at("link");
            const std::string lw = where + ".link";
            if (!lj.is_object()) throw ScenarioError(lw + ": expected an object");
            reject_unknown(lj,
                           {"state_bytes", "bandwidth_mbps", "latency_ms", "control_messages",
                            "control_message_bytes", "rsd_percent"},
                           lw);
            const double state_bytes = number_at(lj, "state_bytes", lw, 0.0);
            const double mbps = number_at(lj, "bandwidth_mbps", lw, 0.0, true);
            const double ms = number_at(lj, "latency_ms", lw, 0.0);
            const double nmsg = number_at(lj, "control_messages", lw, 0.0);
            const double msg_bytes = number_at(lj, "control_message_bytes", lw, 0.0);
            const double rsd = number_at(lj, "rsd_percent", lw, 100.0);
            if (state_bytes < 0) throw ScenarioError(lw + ".state_bytes: must be >= 0");
            if (!(mbps > 0)) throw ScenarioError(lw + ".bandwidth_mbps: must be > 0");
            try {
                const double mt = estimate_migration_time_s(
                    static_cast<std::uint64_t>(state_bytes),
                    static_cast<std::int64_t>(mbps * 1e6), ms / 1e3, static_cast<int>(nmsg),
                    static_cast<std::int64_t>(msg_bytes));
                const double at = adaptation_time(min_at, max_at, rsd);
                // Under a steady input rate the tuple counts cancel to a
                // ratio of durations.
                h.base_cost = at > 0 ? mt / at : 0.0;
            } catch (const DecisionError& e) {
                throw ScenarioError(lw + ": " + e.what());
            }
        }
        out.config.hosts.push_back(h);
        out.host_names.push_back(h.name);
        ++next;
    }

    if (!j.contains("current_host") || !j.at("current_host").is_string()) {
        throw ScenarioError("$.current_host: required string");
    }
    const std::string current = j.at("current_host").get<std::string>();
    auto cit = ids.find(current);
    if (cit == ids.end()) throw ScenarioError("$.current_host: unknown host '" + current + "'");
    out.config.current_host = cit->second;

    if (!j.contains("checks") || !j.at("checks").is_array() || j.at("checks").empty()) {
        throw ScenarioError("$.checks: expected a non-empty array");
    }
    int ci = 0;
    for (const auto& cj : j.at("checks")) {
        const std::string where = "$.checks[" + std::to_string(ci) + "]";
        if (!cj.is_object()) throw ScenarioError(where + ": expected an object");
        reject_unknown(cj, {"processed_tuples", "scores"}, where);
        DecideCheck check;
        check.processed_tuples = number_at(cj, "processed_tuples", where, 0.0);
        if (check.processed_tuples < 0) {
            throw ScenarioError(where + ".processed_tuples: must be >= 0");
        }
        if (!cj.contains("scores") || !cj.at("scores").is_object()) {
            throw ScenarioError(where + ".scores: required object");
        }
        for (auto it = cj.at("scores").begin(); it != cj.at("scores").end(); ++it) {
            auto hit = ids.find(it.key());
            if (hit == ids.end()) {
                throw ScenarioError(where + ".scores: unknown host '" + it.key() + "'");
            }
            if (!it.value().is_number()) {
                throw ScenarioError(where + ".scores." + it.key() + ": expected a number");
            }
            check.scores[hit->second] = it.value().get<double>();
        }
        for (const auto& h : out.config.hosts) {
            if (!check.scores.count(h.node)) {
                throw ScenarioError(where + ".scores: missing host '" + h.name + "'");
            }
        }
        out.config.checks.push_back(std::move(check));
        ++ci;
    }
    return out;
}

std::string decide_csv(const DecideScenario& ds, const std::vector<DecideRow>& rows) {
    std::string out = "check,processed_tuples";
    for (const auto& name : ds.host_names) out += ",qos_" + name + ",benefit_" + name;
    out += ",migrate_with_costs,migrate_without_costs\n";
    for (const DecideRow& r : rows) {
        out += std::to_string(r.check) + ',' + format_seconds(r.processed_tuples);
        for (const auto& h : ds.config.hosts) {
            out += ',' + format_seconds(r.scores.at(h.node));
            out += ',' + format_seconds(r.benefits.at(h.node));
        }
        out += ',' + ds.host_names[static_cast<std::size_t>(r.cost_aware_choice)];
        out += ',' + ds.host_names[static_cast<std::size_t>(r.cost_blind_choice)];
        out += '\n';
    }
    return out;
}

std::string decide_json(const DecideScenario& ds, const std::vector<DecideRow>& rows) {
    nlohmann::json arr = nlohmann::json::array();
    for (const DecideRow& r : rows) {
        nlohmann::json j;
        j["check"] = r.check;
        j["processed_tuples"] = r.processed_tuples;
        nlohmann::json scores, benefits;
        for (const auto& h : ds.config.hosts) {
            scores[h.name] = r.scores.at(h.node);
            benefits[h.name] = r.benefits.at(h.node);
        }
        j["qos"] = scores;
        j["benefit"] = benefits;
        j["migrate_with_costs"] = ds.host_names[static_cast<std::size_t>(r.cost_aware_choice)];
        j["migrate_without_costs"] = ds.host_names[static_cast<std::size_t>(r.cost_blind_choice)];
        arr.push_back(j);
    }
    return arr.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Simulation outputs.

std::string metrics_csv(const std::vector<MetricsRecord>& records,
                        const std::vector<LatencyStats>& latency) {
    std::string out = metrics_csv_header() + "\n";
    for (std::size_t i = 0; i < records.size(); ++i) {
        out += metrics_csv_row(records[i], i < latency.size() ? &latency[i] : nullptr);
        out += '\n';
    }
    return out;
}

nlohmann::json trace_json(const Scenario& sc, const RunOutput& run) {
    nlohmann::json j;
    j["nodes"] = sc.nodes;
    nlohmann::json log = nlohmann::json::array();
    for (const LogEntry& e : run.log_entries) {
        log.push_back({{"t_s", seconds(e.t)},
                       {"kind", log_kind_name(e.kind)},
                       {"node", e.node},
                       {"migration", e.migration},
                       {"query", e.query},
                       {"stream", e.stream},
                       {"a", e.a},
                       {"b", e.b}});
    }
    j["log"] = std::move(log);
    nlohmann::json sinks = nlohmann::json::array();
    for (const SinkRecord& r : run.sink_records) {
        sinks.push_back({{"node", r.node},
                         {"stream", r.tuple.stream},
                         {"seq", r.tuple.seq},
                         {"key", r.tuple.key},
                         {"value", r.tuple.value},
                         {"ts_s", seconds(r.tuple.ts)},
                         {"arrival_s", seconds(r.arrival)}});
    }
    j["sinks"] = std::move(sinks);
    return j;
}

struct CompareLine {
    std::string variant;
    std::uint64_t seed = 0;
    MetricsRecord metrics;
    OutputJoin join;
    std::uint64_t sink_records = 0;
};

std::string compare_csv(const std::vector<CompareLine>& lines) {
    std::string out =
        "variant,seed,migration_id,status,equivalent,sink_records,missing,extra,mismatched,"
        "freeze_s,state_movement_s,state_moved_bytes,state_replicated_bytes,bytes_duplicated,"
        "duplicate_sends,buffered_tuples,control_messages,acks,"
        "mean_added_latency_s,max_added_latency_s\n";
    for (const CompareLine& l : lines) {
        const MetricsRecord& m = l.metrics;
        out += l.variant + ',' + std::to_string(l.seed) + ',' + std::to_string(m.migration_id) +
               ',' + m.status + ',' + (l.join.equivalent ? "yes" : "no") + ',' +
               std::to_string(l.sink_records) + ',' + std::to_string(l.join.missing) + ',' +
               std::to_string(l.join.extra) + ',' + std::to_string(l.join.mismatched) + ',' +
               format_seconds(m.freeze_s) + ',' + format_seconds(m.state_movement_s) + ',' +
               std::to_string(m.state_moved_bytes) + ',' + std::to_string(m.state_replicated_bytes) +
               ',' + std::to_string(m.bytes_duplicated) + ',' + std::to_string(m.duplicate_sends) +
               ',' + std::to_string(m.buffered_tuples) + ',' + std::to_string(m.control_messages) +
               ',' + std::to_string(m.acks) + ',' + format_seconds(l.join.latency.mean_added_s) +
               ',' + format_seconds(l.join.latency.max_added_s) + '\n';
    }
    return out;
}

std::string compare_json_text(const std::vector<CompareLine>& lines) {
    nlohmann::json arr = nlohmann::json::array();
    for (const CompareLine& l : lines) {
        nlohmann::json j;
        j["variant"] = l.variant;
        j["seed"] = l.seed;
        j["migration_id"] = l.metrics.migration_id;
        j["status"] = l.metrics.status;
        j["equivalent"] = l.join.equivalent;
        j["sink_records"] = l.sink_records;
        j["missing"] = l.join.missing;
        j["extra"] = l.join.extra;
        j["mismatched"] = l.join.mismatched;
        j["freeze_s"] = l.metrics.freeze_s;
        j["state_movement_s"] = l.metrics.state_movement_s;
        j["state_moved_bytes"] = l.metrics.state_moved_bytes;
        j["state_replicated_bytes"] = l.metrics.state_replicated_bytes;
        j["bytes_duplicated"] = l.metrics.bytes_duplicated;
        j["duplicate_sends"] = l.metrics.duplicate_sends;
        j["buffered_tuples"] = l.metrics.buffered_tuples;
        j["control_messages"] = l.metrics.control_messages;
        j["acks"] = l.metrics.acks;
        j["mean_added_latency_s"] = l.join.latency.mean_added_s;
        j["max_added_latency_s"] = l.join.latency.max_added_s;
        arr.push_back(j);
    }
    return arr.dump(2) + "\n";
}

void override_variant(Scenario& sc, const std::string& variant) {
    for (MigrationDecl& m : sc.migrations) m.variant = variant;
    if (sc.decision) sc.decision->variant = variant;
    validate_scenario(sc);
}

// ---------------------------------------------------------------------------
// Subcommand bodies. Each returns a process exit code.

int cmd_validate(const std::string& path) {
    const std::string text = read_file(path);
    const nlohmann::json j = parse_json(text, path);
    if (j.is_object() && j.contains("format") && j.at("format") == "migrasim-decide/1") {
        (void)decide_from_json_text(text);
        std::cout << "ok: decision scenario with "
                  << j.at("hosts").size() << " hosts\n";
        return kExitOk;
    }
    const Scenario sc = scenario_from_json_text(text);
    std::cout << "ok: scenario '" << sc.name << "' with " << sc.nodes.size() << " nodes, "
              << sc.queries.size() << " queries, " << sc.migrations.size() << " migrations\n";
    return kExitOk;
}

int cmd_run(const std::string& path, std::uint64_t* seed, const std::string& variant, bool trace,
            const std::string& out_dir, const std::string& format) {
    Scenario sc = scenario_from_json_text(read_file(path));
    if (seed != nullptr) sc.seed = *seed;
    if (!variant.empty()) override_variant(sc, variant);

    RunConfig cfg;
    cfg.trace = trace;
    const CompareOutput cmp = run_compare(sc, cfg);
    diagnostics(cmp.migrated, sc.name);

    std::vector<LatencyStats> latency(cmp.migrated.metrics.size(), cmp.join.latency);
    const std::filesystem::path dir = out_dir.empty() ? "." : out_dir;
    if (format == "json") {
        write_file(dir / "metrics.json", metrics_json(cmp.migrated.metrics, latency) + "\n");
    } else {
        write_file(dir / "metrics.csv", metrics_csv(cmp.migrated.metrics, latency));
    }
    if (trace) {
        write_file(dir / "trace.json", trace_json(sc, cmp.migrated).dump(2) + "\n");
    }

    std::cout << "scenario '" << sc.name << "': " << cmp.migrated.sink_records.size()
              << " outputs, " << cmp.migrated.outcomes.size() << " migrations, baseline "
              << (cmp.join.equivalent ? "equivalent" : "DIVERGED") << "\n";
    for (const MetricsRecord& m : cmp.migrated.metrics) {
        std::cout << "  migration " << m.migration_id << " (" << m.variant << "): " << m.status
                  << ", freeze " << format_seconds(m.freeze_s) << " s, moved "
                  << m.state_moved_bytes << " bytes\n";
    }
    if (!cmp.join.equivalent) {
        std::cerr << "error: migrated outputs diverge from the baseline (missing "
                  << cmp.join.missing << ", extra " << cmp.join.extra << ", mismatched "
                  << cmp.join.mismatched << ")\n";
        return kExitMismatch;
    }
    return kExitOk;
}

int cmd_compare(const std::string& path, std::vector<std::string> variants,
                std::vector<std::uint64_t> seeds, const std::string& out_dir,
                const std::string& format) {
    const Scenario base = scenario_from_json_text(read_file(path));
    if (base.migrations.empty()) {
        throw ScenarioError("$.migrations: compare needs at least one migration");
    }
    if (variants.empty()) variants.push_back(base.migrations.front().variant);
    if (seeds.empty()) seeds.push_back(base.seed);

    // Validate every requested variant up front so a bad name fails before
    // any simulation runs.
    for (const std::string& v : variants) {
        Scenario probe = base;
        override_variant(probe, v);
    }

    std::vector<CompareLine> lines;
    bool all_equivalent = true;
    for (std::uint64_t seed : seeds) {
        for (const std::string& v : variants) {
            Scenario sc = base;
            sc.seed = seed;
            override_variant(sc, v);
            const CompareOutput cmp = run_compare(sc, RunConfig{});
            diagnostics(cmp.migrated, sc.name + " [" + v + "]");
            all_equivalent = all_equivalent && cmp.join.equivalent;
            if (cmp.migrated.metrics.empty()) {
                CompareLine l;
                l.variant = v;
                l.seed = seed;
                l.metrics.status = "not-triggered";
                l.join = cmp.join;
                l.sink_records = cmp.migrated.sink_records.size();
                lines.push_back(std::move(l));
            }
            for (const MetricsRecord& m : cmp.migrated.metrics) {
                CompareLine l;
                l.variant = v;
                l.seed = seed;
                l.metrics = m;
                l.join = cmp.join;
                l.sink_records = cmp.migrated.sink_records.size();
                lines.push_back(std::move(l));
            }
        }
    }

    const std::filesystem::path dir = out_dir.empty() ? "." : out_dir;
    if (format == "json") {
        write_file(dir / "compare.json", compare_json_text(lines));
    } else {
        write_file(dir / "compare.csv", compare_csv(lines));
    }
    std::cout << "compared " << variants.size() << " variant(s) across " << seeds.size()
              << " seed(s): " << (all_equivalent ? "all equivalent" : "DIVERGENCE") << "\n";
    return all_equivalent ? kExitOk : kExitMismatch;
}

int cmd_decide(const std::string& path, const std::string& out_dir, const std::string& format) {
    const DecideScenario ds = decide_from_json_text(read_file(path));
    std::vector<DecideRow> rows;
    try {
        rows = run_decision_table(ds.config);
    } catch (const DecisionError& e) {
        throw ScenarioError(std::string("$: ") + e.what());
    }
    const std::filesystem::path dir = out_dir.empty() ? "." : out_dir;
    if (format == "json") {
        write_file(dir / "decide.json", decide_json(ds, rows));
    } else {
        write_file(dir / "decide.csv", decide_csv(ds, rows));
    }
    std::cout << "decided " << rows.size() << " checks over " << ds.host_names.size()
              << " hosts\n";
    return kExitOk;
}

} // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"migrasim: deterministic operator-migration simulator"};
    app.require_subcommand(1);

    std::string scenario_path, out_dir = ".", format = "csv", variant;
    std::vector<std::string> variants;
    std::vector<std::uint64_t> seeds;
    std::uint64_t seed = 0;
    bool trace = false;

    CLI::App* run = app.add_subcommand("run", "Run a scenario against its baseline twin");
    run->add_option("scenario", scenario_path, "Scenario JSON path")->required();
    CLI::Option* seed_opt = run->add_option("--seed", seed, "Override the scenario seed");
    run->add_option("--variant", variant, "Override every migration's variant");
    run->add_flag("--trace", trace, "Also write trace.json");
    run->add_option("--out-dir", out_dir, "Directory for result files");
    run->add_option("--format", format, "Output format")
        ->check(CLI::IsMember({"csv", "json"}));

    CLI::App* cmp = app.add_subcommand("compare", "Run several variants on one scenario");
    cmp->add_option("scenario", scenario_path, "Scenario JSON path")->required();
    cmp->add_option("variants", variants, "Variants to compare (default: the scenario's)");
    cmp->add_option("--variant", variants, "Variants to compare (repeatable)");
    cmp->add_option("--seed", seeds, "Seeds to run (repeatable)");
    cmp->add_option("--out-dir", out_dir, "Directory for result files");
    cmp->add_option("--format", format, "Output format")
        ->check(CLI::IsMember({"csv", "json"}));

    CLI::App* dec = app.add_subcommand("decide", "Replay a decision scenario into a table");
    dec->add_option("scenario", scenario_path, "Decision scenario JSON path")->required();
    dec->add_option("--out-dir", out_dir, "Directory for result files");
    dec->add_option("--format", format, "Output format")
        ->check(CLI::IsMember({"csv", "json"}));

    CLI::App* val = app.add_subcommand("validate", "Validate a scenario or decision file");
    val->add_option("scenario", scenario_path, "JSON path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e); // --help
        app.exit(e);
        return kExitInvalid;
    }

    try {
        if (run->parsed()) {
            std::uint64_t* seed_override = seed_opt->count() > 0 ? &seed : nullptr;
            return cmd_run(scenario_path, seed_override, variant, trace, out_dir, format);
        }
        if (cmp->parsed()) return cmd_compare(scenario_path, variants, seeds, out_dir, format);
        if (dec->parsed()) return cmd_decide(scenario_path, out_dir, format);
        if (val->parsed()) return cmd_validate(scenario_path);
    } catch (const ScenarioError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInvalid;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitError;
    }
    return kExitInvalid;
}

} // namespace migrasim
