#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "migrasim/decision.hpp"

using namespace migrasim;

TEST_CASE("ewma rate converges to a steady input rate and halves per half-life") {
    EwmaRate r(10.0);
    CHECK(r.value(0) == 0.0);
    // 100 events/s, long enough for the startup transient to wash out.
    const SimTime step = kNsPerSec / 100;
    SimTime t = 0;
    for (int i = 0; i < 10000; ++i) {
        t = static_cast<SimTime>(i) * step;
        r.observe(t);
    }
    CHECK(r.value(t) == doctest::Approx(100.0).epsilon(0.02));
    // One half-life of silence halves the estimate.
    CHECK(r.value(t + 10 * kNsPerSec) == doctest::Approx(r.value(t) / 2).epsilon(0.001));
    // Querying the past never rewinds.
    CHECK(r.value(0) == r.value(t));

    CHECK_THROWS_AS(r.observe(t - 1), DecisionError);
    CHECK_THROWS_AS(EwmaRate(0.0), DecisionError);
    CHECK_THROWS_AS(EwmaRate(-1.0), DecisionError);
}

TEST_CASE("relative standard deviation matches hand calculation and clamps") {
    CHECK(relative_std_dev({10, 10, 10}) == 0.0);
    // {2,4,4,4,5,5,7,9}: mean 5, sample variance 32/7.
    CHECK(relative_std_dev({2, 4, 4, 4, 5, 5, 7, 9}) ==
          doctest::Approx(100.0 * std::sqrt(32.0 / 7.0) / 5.0));
    // Too little data or a useless mean reads as maximally unstable.
    CHECK(relative_std_dev({}) == 100.0);
    CHECK(relative_std_dev({42}) == 100.0);
    CHECK(relative_std_dev({-1, 1}) == 100.0);
    CHECK(relative_std_dev({-5, -7, -6}) == 100.0);
    // Wild swings clamp at 100.
    CHECK(relative_std_dev({0.001, 10, 0.001}) == 100.0);
}

TEST_CASE("adaptation time interpolates between its bounds by stability") {
    CHECK(adaptation_time(5, 15, 50) == doctest::Approx(10.0));
    CHECK(adaptation_time(5, 15, 0) == doctest::Approx(15.0));   // fully stable
    CHECK(adaptation_time(5, 15, 100) == doctest::Approx(5.0));  // fully unstable
    CHECK(adaptation_time(5, 15, 250) == doctest::Approx(5.0));  // clamped
    CHECK(adaptation_time(5, 15, -3) == doctest::Approx(15.0));  // clamped
    CHECK(adaptation_time(7, 7, 50) == doctest::Approx(7.0));
    CHECK_THROWS_AS(adaptation_time(-1, 5, 50), DecisionError);
    CHECK_THROWS_AS(adaptation_time(5, 4, 50), DecisionError);
}

TEST_CASE("score history keeps a bounded window but an unbounded mean") {
    ScoreHistory h(3);
    for (double s : {1.0, 2.0, 3.0, 4.0, 5.0}) h.push(s);
    CHECK(h.size() == 3);
    CHECK(h.recent().front() == 3.0);
    CHECK(h.recent().back() == 5.0);
    CHECK(h.cumulative_mean() == doctest::Approx(3.0)); // (1+..+5)/5

    ScoreHistory young(5);
    CHECK(young.cumulative_mean() == 0.0);
    young.push(2.0);
    CHECK(young.rsd() == 100.0); // one sample: unknown stability
    young.push(2.0);
    CHECK(young.rsd() == 0.0);

    CHECK_THROWS_AS(ScoreHistory(1), DecisionError);
}

TEST_CASE("migration time estimate: state transfer plus control exchanges") {
    // 1 GB over 200 Mbit/s with 1 ms latency: 8e9/2e8 + 0.001.
    CHECK(estimate_migration_time_s(1'000'000'000ULL, 200'000'000, 0.001, 0, 0) ==
          doctest::Approx(40.001));
    // Four 100-byte messages on a 1 Mbit/s, 1 ms link around an empty move.
    CHECK(estimate_migration_time_s(0, 1'000'000, 0.001, 4, 100) ==
          doctest::Approx(0.001 + 4 * (800.0 / 1e6 + 0.001)));
    CHECK(estimate_migration_time_s(0, 5, 0, 0, 0) == doctest::Approx(0.0));
    CHECK_THROWS_AS(estimate_migration_time_s(1, 0, 0, 0, 0), DecisionError);
    CHECK_THROWS_AS(estimate_migration_time_s(1, -5, 0, 0, 0), DecisionError);
    CHECK_THROWS_AS(estimate_migration_time_s(1, 5, -0.1, 0, 0), DecisionError);
    CHECK_THROWS_AS(estimate_migration_time_s(1, 5, 0, -1, 0), DecisionError);
}

TEST_CASE("migration cost is the weighted tuple ratio, with strict edge cases") {
    CHECK(migration_cost(0.1, 15, 100) == doctest::Approx(0.015));
    CHECK(migration_cost(0.1, 1.5, 1.0) == doctest::Approx(0.15));
    CHECK(migration_cost(0.5, 1.0, 1.0) == doctest::Approx(0.5));
    CHECK(migration_cost(0.0, 7, 3) == 0.0);
    CHECK(migration_cost(0.2, 0, 0) == 0.0); // nothing processed either way: free
    CHECK_THROWS_AS(migration_cost(0.2, 5, 0), DecisionError);
    CHECK_THROWS_AS(migration_cost(0.2, -1, 10), DecisionError);
    CHECK_THROWS_AS(migration_cost(0.2, 1, -10), DecisionError);
}

TEST_CASE("benefit discounts the score by the cost share") {
    CHECK(benefit(2.5, 0.15) == doctest::Approx(2.125));
    CHECK(benefit(2.7, 0.5) == doctest::Approx(1.35));
    CHECK(benefit(1.7, 0.0) == doctest::Approx(1.7));
    CHECK(benefit(2.0, 1.0) == doctest::Approx(0.0));
}

TEST_CASE("host selection maximizes benefit; ties prefer current, then lowest id") {
    // The cost discount can flip an otherwise better rival.
    CHECK(select_host({{0, 1.0, 0.0}, {1, 2.0, 0.6}}, 0) == 0);
    CHECK(select_host({{0, 1.0, 0.0}, {1, 2.0, 0.4}}, 0) == 1);
    // Exact tie: stay where we are.
    CHECK(select_host({{0, 1.5, 0.0}, {1, 3.0, 0.5}}, 0) == 0);
    // Tie between two rivals that both beat the current host: lowest id.
    CHECK(select_host({{5, 0.5, 0.0}, {3, 2.0, 0.5}, {2, 2.0, 0.5}}, 5) == 2);
    // Tie that includes the current host: stay.
    CHECK(select_host({{5, 1.0, 0.0}, {3, 2.0, 0.5}, {2, 2.0, 0.5}}, 5) == 5);
    CHECK_THROWS_AS(select_host({}, 0), DecisionError);
}

TEST_CASE("decision table: cost-aware picks flip only when benefit beats current") {
    // Three hosts; the query runs on host 0. Rival 1 is cheap to reach
    // (cost 0.15), rival 2 is expensive (cost 0.5).
    DecideConfig cfg;
    cfg.hosts = {{0, "current", 0.0, 0.1}, {1, "near", 1.5, 0.1}, {2, "far", 1.0, 0.5}};
    cfg.current_host = 0;
    cfg.checks = {
        {1000, {{0, 1.5}, {1, 1.0}, {2, 2.7}}},
        {2000, {{0, 1.6}, {1, 1.6}, {2, 2.5}}},
        {3000, {{0, 1.4}, {1, 2.5}, {2, 2.4}}},
        {4000, {{0, 1.7}, {1, 2.8}, {2, 2.6}}},
    };

    auto rows = run_decision_table(cfg);
    REQUIRE(rows.size() == 4);

    // Current host is never discounted.
    for (const auto& r : rows) CHECK(r.benefits.at(0) == doctest::Approx(r.scores.at(0)));

    CHECK(rows[0].benefits.at(1) == doctest::Approx(0.85));
    CHECK(rows[1].benefits.at(1) == doctest::Approx(1.36));
    CHECK(rows[2].benefits.at(1) == doctest::Approx(2.125));
    CHECK(rows[3].benefits.at(1) == doctest::Approx(2.38));
    CHECK(rows[0].benefits.at(2) == doctest::Approx(1.35));
    CHECK(rows[1].benefits.at(2) == doctest::Approx(1.25));
    CHECK(rows[2].benefits.at(2) == doctest::Approx(1.2));
    CHECK(rows[3].benefits.at(2) == doctest::Approx(1.3));

    // Cost-aware: stay, stay, then follow the near rival once its benefit wins.
    CHECK(rows[0].cost_aware_choice == 0);
    CHECK(rows[1].cost_aware_choice == 0);
    CHECK(rows[2].cost_aware_choice == 1);
    CHECK(rows[3].cost_aware_choice == 1);

    // Cost-blind cumulative-mean policy chases the far host every time.
    for (const auto& r : rows) CHECK(r.cost_blind_choice == 2);

    CHECK(rows[0].processed_tuples == 1000);
    CHECK(rows[3].check == 4);
}

TEST_CASE("decision table: zero cost weight reduces benefit to the raw score") {
    DecideConfig cfg;
    cfg.hosts = {{0, "a", 2.0, 0.0}, {1, "b", 5.0, 0.0}};
    cfg.current_host = 0;
    cfg.checks = {
        {10, {{0, 1.0}, {1, 3.0}}},
        {20, {{0, 3.0}, {1, 1.0}}},
    };
    auto rows = run_decision_table(cfg);
    REQUIRE(rows.size() == 2);
    for (const auto& r : rows) {
        CHECK(r.benefits.at(0) == doctest::Approx(r.scores.at(0)));
        CHECK(r.benefits.at(1) == doctest::Approx(r.scores.at(1)));
    }
    CHECK(rows[0].cost_aware_choice == 1);
    CHECK(rows[1].cost_aware_choice == 0);
}

TEST_CASE("decision table rejects inconsistent configurations") {
    DecideConfig missing;
    missing.hosts = {{0, "a", 0, 1}, {1, "b", 1, 1}};
    missing.current_host = 0;
    missing.checks = {{10, {{0, 1.0}}}}; // no score for host 1
    CHECK_THROWS_AS((void)run_decision_table(missing), DecisionError);

    DecideConfig dup;
    dup.hosts = {{0, "a", 0, 1}, {0, "twin", 1, 1}};
    dup.current_host = 0;
    CHECK_THROWS_AS((void)run_decision_table(dup), DecisionError);

    DecideConfig stranger;
    stranger.hosts = {{0, "a", 0, 1}};
    stranger.current_host = 9;
    CHECK_THROWS_AS((void)run_decision_table(stranger), DecisionError);

    CHECK_THROWS_AS((void)run_decision_table(DecideConfig{}), DecisionError);
}
