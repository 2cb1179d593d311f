#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "migrasim/time.hpp"

namespace migrasim {

class DecisionError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// Exponentially decayed event-rate estimator (events per second). Each
// observed event adds 1/tau; mass decays as exp(-dt/tau), so a steady input
// converges to its true rate regardless of the decay constant.
class EwmaRate {
  public:
    explicit EwmaRate(double half_life_s = 10.0);

    void observe(SimTime t);
    double value(SimTime t) const;

  private:
    double tau_s_;
    double rate_ = 0;
    SimTime last_ = -1;
};

// Relative standard deviation (sample std dev / mean, in percent) of the
// given scores, clamped to [0, 100]. Fewer than two samples, or a
// non-positive mean, reads as maximally unstable: 100.
double relative_std_dev(const std::vector<double>& scores);

// Rolling score history per candidate host: a bounded window for stability
// (rsd) plus a cumulative mean over everything ever pushed.
class ScoreHistory {
  public:
    explicit ScoreHistory(std::size_t window = 20);

    void push(double score);
    double rsd() const;
    double cumulative_mean() const;
    std::size_t size() const;
    const std::deque<double>& recent() const;

  private:
    std::size_t window_;
    std::deque<double> recent_;
    double cum_sum_ = 0;
    std::uint64_t cum_count_ = 0;
};

// Scales between the configured bounds by score stability: fully unstable
// (rsd 100) gives min_s, fully stable (rsd 0) gives max_s.
double adaptation_time(double min_s, double max_s, double rsd_percent);

// Predicted wall time to move `state_bytes` over one link plus the protocol's
// control-message exchanges on that link.
double estimate_migration_time_s(std::uint64_t state_bytes, std::int64_t bandwidth_bps,
                                 double latency_s, int control_messages,
                                 std::int64_t control_message_bytes);

// weight * (tuples processed during migration / tuples processed during
// adaptation). Zero over zero is a free migration (0); a positive numerator
// over a zero denominator is undefined and throws.
double migration_cost(double weight, double pt_during_migration, double pt_during_adaptation);

double benefit(double score, double cost);

struct HostCandidate {
    std::int32_t node = -1;
    double score = 0; // predicted QoS on that host
    double cost = 0;  // migration cost toward that host (0 for the current host)
};

// Picks the candidate with the highest score*(1-cost); ties prefer the
// current host, then the lowest node id.
std::int32_t select_host(const std::vector<HostCandidate>& candidates, std::int32_t current);

// ---------------------------------------------------------------------------
// Offline decision table: replays a series of periodic checks over per-host
// QoS scores and fixed per-host migration costs, reporting what the
// cost-aware policy (per-check benefit argmax) and the cost-blind policy
// (cumulative mean score argmax) would each pick. Rows are independent: the
// current host and costs stay as configured.

struct DecideHost {
    std::int32_t node = -1;
    std::string name;
    double base_cost = 0;
    double cost_weight = 1.0;
};

struct DecideCheck {
    double processed_tuples = 0;
    std::map<std::int32_t, double> scores; // node -> QoS
};

struct DecideConfig {
    std::vector<DecideHost> hosts;
    std::vector<DecideCheck> checks;
    std::int32_t current_host = -1;
};

struct DecideRow {
    int check = 0;
    double processed_tuples = 0;
    std::map<std::int32_t, double> scores;
    std::map<std::int32_t, double> benefits;
    std::int32_t cost_aware_choice = -1;
    std::int32_t cost_blind_choice = -1;
};

std::vector<DecideRow> run_decision_table(const DecideConfig& cfg);

} // namespace migrasim
