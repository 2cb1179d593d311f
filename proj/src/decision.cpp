#include "migrasim/decision.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace migrasim {

namespace {
constexpr double kLn2 = 0.6931471805599453;
}

EwmaRate::EwmaRate(double half_life_s) : tau_s_(half_life_s / kLn2) {
    if (!(half_life_s > 0)) {
        throw DecisionError("EwmaRate: half life must be positive");
    }
}

void EwmaRate::observe(SimTime t) {
    if (last_ >= 0) {
        if (t < last_) {
            throw DecisionError("EwmaRate: observations must be time-ordered");
        }
        rate_ *= std::exp(-seconds(t - last_) / tau_s_);
    }
    rate_ += 1.0 / tau_s_;
    last_ = t;
}

double EwmaRate::value(SimTime t) const {
    if (last_ < 0) {
        return 0;
    }
    if (t <= last_) {
        return rate_;
    }
    return rate_ * std::exp(-seconds(t - last_) / tau_s_);
}

double relative_std_dev(const std::vector<double>& scores) {
    if (scores.size() < 2) {
        return 100.0;
    }
    double sum = 0;
    for (double s : scores) {
        sum += s;
    }
    const double mean = sum / static_cast<double>(scores.size());
    if (!(mean > 0)) {
        return 100.0;
    }
    double sq = 0;
    for (double s : scores) {
        sq += (s - mean) * (s - mean);
    }
    const double sd = std::sqrt(sq / static_cast<double>(scores.size() - 1));
    return std::clamp(sd / mean * 100.0, 0.0, 100.0);
}

ScoreHistory::ScoreHistory(std::size_t window) : window_(window) {
    if (window_ < 2) {
        throw DecisionError("ScoreHistory: window must hold at least two samples");
    }
}

void ScoreHistory::push(double score) {
    recent_.push_back(score);
    if (recent_.size() > window_) {
        recent_.pop_front();
    }
    cum_sum_ += score;
    ++cum_count_;
}

double ScoreHistory::rsd() const {
    return relative_std_dev(std::vector<double>(recent_.begin(), recent_.end()));
}

double ScoreHistory::cumulative_mean() const {
    return cum_count_ == 0 ? 0.0 : cum_sum_ / static_cast<double>(cum_count_);
}

std::size_t ScoreHistory::size() const {
    return recent_.size();
}

const std::deque<double>& ScoreHistory::recent() const {
    return recent_;
}

double adaptation_time(double min_s, double max_s, double rsd_percent) {
    if (!(min_s >= 0) || !(max_s >= min_s)) {
        throw DecisionError("adaptation_time: need 0 <= min <= max");
    }
    const double rsd = std::clamp(rsd_percent, 0.0, 100.0);
    return min_s + (max_s - min_s) / 100.0 * (100.0 - rsd);
}

double estimate_migration_time_s(std::uint64_t state_bytes, std::int64_t bandwidth_bps,
                                 double latency_s, int control_messages,
                                 std::int64_t control_message_bytes) {
    if (bandwidth_bps <= 0) {
        throw DecisionError("estimate_migration_time_s: bandwidth must be positive");
    }
    if (latency_s < 0 || control_messages < 0 || control_message_bytes < 0) {
        throw DecisionError("estimate_migration_time_s: negative input");
    }
    const double bw = static_cast<double>(bandwidth_bps);
    const double state_s = static_cast<double>(state_bytes) * 8.0 / bw + latency_s;
    const double ctrl_s = static_cast<double>(control_message_bytes) * 8.0 / bw + latency_s;
    return state_s + static_cast<double>(control_messages) * ctrl_s;
}

double migration_cost(double weight, double pt_during_migration, double pt_during_adaptation) {
    if (pt_during_migration < 0 || pt_during_adaptation < 0) {
        throw DecisionError("migration_cost: tuple counts must be non-negative");
    }
    if (pt_during_adaptation == 0) {
        if (pt_during_migration == 0) {
            return 0;
        }
        throw DecisionError("migration_cost: zero adaptation throughput with nonzero "
                            "migration throughput");
    }
    return weight * pt_during_migration / pt_during_adaptation;
}

double benefit(double score, double cost) {
    return score * (1.0 - cost);
}

std::int32_t select_host(const std::vector<HostCandidate>& candidates, std::int32_t current) {
    if (candidates.empty()) {
        throw DecisionError("select_host: no candidates");
    }
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& c : candidates) {
        best = std::max(best, benefit(c.score, c.cost));
    }
    std::int32_t choice = -1;
    for (const auto& c : candidates) {
        if (benefit(c.score, c.cost) != best) {
            continue;
        }
        if (c.node == current) {
            return current;
        }
        if (choice < 0 || c.node < choice) {
            choice = c.node;
        }
    }
    return choice;
}

std::vector<DecideRow> run_decision_table(const DecideConfig& cfg) {
    if (cfg.hosts.empty()) {
        throw DecisionError("decision table: no hosts");
    }
    std::map<std::int32_t, const DecideHost*> by_node;
    for (const auto& h : cfg.hosts) {
        if (!by_node.emplace(h.node, &h).second) {
            throw DecisionError("decision table: duplicate host id");
        }
    }
    if (!by_node.count(cfg.current_host)) {
        throw DecisionError("decision table: current host is not a candidate");
    }

    std::map<std::int32_t, ScoreHistory> history;
    std::vector<DecideRow> rows;
    int idx = 0;
    for (const auto& check : cfg.checks) {
        ++idx;
        DecideRow row;
        row.check = idx;
        row.processed_tuples = check.processed_tuples;

        std::vector<HostCandidate> cands;
        for (const auto& h : cfg.hosts) {
            auto it = check.scores.find(h.node);
            if (it == check.scores.end()) {
                throw DecisionError("decision table: check " + std::to_string(idx) +
                                    " is missing a score for host " + h.name);
            }
            const double score = it->second;
            const double cost =
                h.node == cfg.current_host ? 0.0 : h.cost_weight * h.base_cost;
            row.scores[h.node] = score;
            row.benefits[h.node] = benefit(score, cost);
            cands.push_back({h.node, score, cost});
            history.try_emplace(h.node).first->second.push(score);
        }
        row.cost_aware_choice = select_host(cands, cfg.current_host);

        std::vector<HostCandidate> blind;
        for (const auto& h : cfg.hosts) {
            blind.push_back({h.node, history.at(h.node).cumulative_mean(), 0.0});
        }
        row.cost_blind_choice = select_host(blind, cfg.current_host);

        rows.push_back(std::move(row));
    }
    return rows;
}

} // namespace migrasim
