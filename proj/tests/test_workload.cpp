#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "migrasim/workload.hpp"

using namespace migrasim;

namespace {

SourceSpec one_phase(double start_s, double rate, std::uint64_t count) {
    SourceSpec s;
    s.stream = 3;
    WorkloadPhase p;
    p.start_s = start_s;
    p.rate_per_s = rate;
    p.count = count;
    s.phases.push_back(p);
    return s;
}

} // namespace

TEST_CASE("emissions at divisor rates are exactly spaced with no drift") {
    // 1000/s = 1 ms steps; tuple i at exactly i milliseconds.
    auto ems = generate_emissions(one_phase(0, 1000, 10'000), 42);
    REQUIRE(ems.size() == 10'000);
    for (std::size_t i = 0; i < ems.size(); ++i) {
        CHECK(ems[i].t == static_cast<SimTime>(i) * 1'000'000);
    }
    // 50/s starting at 2 s: 20 ms steps offset by 2e9 ns.
    auto slow = generate_emissions(one_phase(2.0, 50, 100), 42);
    CHECK(slow.front().t == 2'000'000'000);
    CHECK(slow[1].t - slow[0].t == 20'000'000);
    CHECK(slow.back().t == 2'000'000'000 + 99LL * 20'000'000);
}

TEST_CASE("the same seed reproduces the same schedule; a different one does not") {
    SourceSpec s = one_phase(0, 500, 2000);
    s.phases[0].key.kind = KeySpec::Kind::Uniform;
    s.phases[0].key.a = 0;
    s.phases[0].key.b = 999;
    s.phases[0].payload.kind = PayloadSpec::Kind::Uniform;
    s.phases[0].payload.a = 16;
    s.phases[0].payload.b = 4096;
    s.phases[0].jitter_ns = 500'000;

    auto a = generate_emissions(s, 7);
    auto b = generate_emissions(s, 7);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].t == b[i].t);
        CHECK(a[i].key == b[i].key);
        CHECK(a[i].payload_bytes == b[i].payload_bytes);
    }
    auto c = generate_emissions(s, 8);
    bool any_diff = false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].key != c[i].key || a[i].payload_bytes != c[i].payload_bytes) any_diff = true;
    }
    CHECK(any_diff);
}

TEST_CASE("streams draw independent randomness from the same seed") {
    SourceSpec s1 = one_phase(0, 100, 500);
    s1.phases[0].key = {KeySpec::Kind::Uniform, 0, 1'000'000};
    SourceSpec s2 = s1;
    s2.stream = 4;
    auto a = generate_emissions(s1, 99);
    auto b = generate_emissions(s2, 99);
    bool any_diff = false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].key != b[i].key) any_diff = true;
    }
    CHECK(any_diff);
}

TEST_CASE("cycle keys walk the residues in order") {
    SourceSpec s = one_phase(0, 100, 25);
    s.phases[0].key.kind = KeySpec::Kind::Cycle;
    s.phases[0].key.a = 7;
    auto ems = generate_emissions(s, 1);
    for (std::size_t i = 0; i < ems.size(); ++i) {
        CHECK(ems[i].key == static_cast<std::int64_t>(i % 7));
    }
}

TEST_CASE("uniform keys and payloads stay inside their bounds") {
    SourceSpec s = one_phase(0, 100, 3000);
    s.phases[0].key = {KeySpec::Kind::Uniform, -5, 5};
    s.phases[0].payload.kind = PayloadSpec::Kind::Uniform;
    s.phases[0].payload.a = 100;
    s.phases[0].payload.b = 200;
    std::set<std::int64_t> seen;
    for (const Emission& e : generate_emissions(s, 3)) {
        CHECK(e.key >= -5);
        CHECK(e.key <= 5);
        CHECK(e.payload_bytes >= 100);
        CHECK(e.payload_bytes <= 200);
        seen.insert(e.key);
    }
    CHECK(seen.size() == 11); // all values of a narrow range appear
}

TEST_CASE("jitter shifts emissions by at most the configured bound") {
    SourceSpec s = one_phase(0, 100, 1000);
    s.phases[0].jitter_ns = 2'000'000;
    auto jittered = generate_emissions(s, 5);
    auto clean = generate_emissions(one_phase(0, 100, 1000), 5);
    // Sorting may reorder, so compare the multiset bounds pairwise after sort.
    for (std::size_t i = 0; i < jittered.size(); ++i) {
        CHECK(jittered[i].t >= clean[i].t - 2'000'000);
        CHECK(jittered[i].t <= clean[i].t + 2 * 2'000'000);
    }
    for (std::size_t i = 1; i < jittered.size(); ++i) {
        CHECK(jittered[i].t >= jittered[i - 1].t);
    }
}

TEST_CASE("phases concatenate and extra emissions merge in time order") {
    SourceSpec s;
    s.stream = 0;
    WorkloadPhase p1;
    p1.start_s = 0;
    p1.rate_per_s = 10;
    p1.count = 10; // 0 .. 0.9 s
    WorkloadPhase p2;
    p2.start_s = 5;
    p2.rate_per_s = 100;
    p2.count = 10; // 5 .. 5.09 s
    s.phases = {p1, p2};
    Emission e;
    e.t = ns_from_seconds(0.35);
    e.key = 77;
    s.extra = {e};
    auto ems = generate_emissions(s, 9);
    REQUIRE(ems.size() == 21);
    for (std::size_t i = 1; i < ems.size(); ++i) {
        CHECK(ems[i].t >= ems[i - 1].t);
    }
    bool found = false;
    for (const Emission& m : ems) {
        if (m.key == 77) found = m.t == ns_from_seconds(0.35);
    }
    CHECK(found);
}

TEST_CASE("invalid phases are rejected") {
    SourceSpec s = one_phase(0, 0, 10);
    CHECK_THROWS(generate_emissions(s, 1));
    s = one_phase(-1, 10, 10);
    CHECK_THROWS(generate_emissions(s, 1));
    s = one_phase(0, 10, 10);
    s.phases[0].key.kind = KeySpec::Kind::Cycle;
    s.phases[0].key.a = 0;
    CHECK_THROWS(generate_emissions(s, 1));
    s = one_phase(0, 10, 10);
    s.phases[0].key = {KeySpec::Kind::Uniform, 5, 4};
    CHECK_THROWS(generate_emissions(s, 1));
    s = one_phase(0, 10, 10);
    s.stream = -1;
    CHECK_THROWS(generate_emissions(s, 1));
    // A zero-count phase is skipped, not an error.
    s = one_phase(0, 10, 0);
    CHECK(generate_emissions(s, 1).empty());
}
