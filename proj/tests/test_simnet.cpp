#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <vector>

#include "migrasim/simnet.hpp"

using namespace migrasim;

TEST_CASE("transmission time arithmetic") {
    // 168 bytes over 200 mbit/s: 1344 bits / 2e8 bps = 6.72 us.
    CHECK(transmission_ns(168, 200'000'000) == 6720);
    // 1 GB over 100 mbit/s: 8e9 bits / 1e8 bps = 80 s.
    CHECK(transmission_ns(1'000'000'000ULL, 100'000'000) == 80 * kNsPerSec);
    // Values where bytes*8e9 overflows 64-bit intermediates: 5 GB over 1 gbit/s = 40 s.
    CHECK(transmission_ns(5'000'000'000ULL, 1'000'000'000) == 40 * kNsPerSec);
    CHECK(transmission_ns(0, 1000) == 0);
    CHECK_THROWS(transmission_ns(1, 0));
}

TEST_CASE("seconds conversions") {
    CHECK(ns_from_seconds(0.00100672) == 1'006'720);
    CHECK(ns_from_seconds(80.001) == 80'001'000'000LL);
    CHECK(seconds(1'006'720) == doctest::Approx(0.00100672));
    CHECK_THROWS(ns_from_seconds(-1.0));
}

TEST_CASE("single-hop delivery includes latency and transmission") {
    EventQueue q;
    Network net(q);
    net.add_link(LinkSpec{0, 1, 200'000'000, 1'000'000});

    std::vector<std::uint64_t> got;
    SimTime arrival = net.send(0, 1, 168, 7, [&](int dst, std::uint64_t id) {
        CHECK(dst == 1);
        got.push_back(id);
    });
    CHECK(arrival == 1'006'720); // 6.72 us transmission + 1 ms latency
    CHECK(seconds(arrival) == doctest::Approx(0.00100672));
    q.run_until_quiescent(10);
    CHECK(got == std::vector<std::uint64_t>{7});
}

TEST_CASE("large transfer over a slow link") {
    EventQueue q;
    Network net(q);
    net.add_link(LinkSpec{0, 1, 100'000'000, 1'000'000});
    SimTime arrival = net.send(0, 1, 1'000'000'000ULL, 1, [](int, std::uint64_t) {});
    CHECK(seconds(arrival) == doctest::Approx(80.001));
}

TEST_CASE("per-link FIFO serialization: second message waits for the first") {
    EventQueue q;
    Network net(q);
    net.add_link(LinkSpec{0, 1, 200'000'000, 1'000'000});
    SimTime first = net.send(0, 1, 168, 1, [](int, std::uint64_t) {});
    SimTime second = net.send(0, 1, 168, 2, [](int, std::uint64_t) {});
    CHECK(first == 1'006'720);
    // Transmission of the second begins at 6720 (when the first left the
    // sender), not at 0.
    CHECK(second == 6720 + 6720 + 1'000'000);

    // Reverse direction has its own serialization state.
    SimTime reverse = net.send(1, 0, 168, 3, [](int, std::uint64_t) {});
    CHECK(reverse == 1'006'720);
    q.run_until_quiescent(10);
}

TEST_CASE("FIFO order is preserved even for mixed sizes") {
    EventQueue q;
    Network net(q);
    net.add_link(LinkSpec{0, 1, 1'000'000, 0});
    std::vector<std::uint64_t> order;
    auto rec = [&](int, std::uint64_t id) { order.push_back(id); };
    net.send(0, 1, 1'000'000, 1, rec); // 8 s transmission
    net.send(0, 1, 8, 2, rec);         // tiny, but queued behind
    q.run_until_quiescent(10);
    CHECK(order == std::vector<std::uint64_t>{1, 2});
}

TEST_CASE("sends without a link are dropped and counted") {
    EventQueue q;
    Network net(q);
    net.add_link(LinkSpec{0, 1, 1'000'000, 0});
    CHECK(net.send(0, 2, 100, 1, [](int, std::uint64_t) {}) == -1);
    CHECK(net.dropped_unroutable() == 1);
    CHECK(net.sent_count() == 0);
}

TEST_CASE("event queue fires in (time, insertion) order") {
    EventQueue q;
    std::vector<int> order;
    q.schedule(10, [&] { order.push_back(1); });
    q.schedule(5, [&] { order.push_back(2); });
    q.schedule(10, [&] { order.push_back(3); });
    q.schedule(5, [&] {
        order.push_back(4);
        q.schedule(5, [&] { order.push_back(5); }); // same-instant re-entry runs after peers
    });
    SimTime end = q.run_until_quiescent(100);
    CHECK(order == std::vector<int>{2, 4, 5, 1, 3});
    CHECK(end == 10);
}

TEST_CASE("scheduling into the past throws") {
    EventQueue q;
    q.schedule(10, [] {});
    q.run_until_quiescent(10);
    CHECK(q.now() == 10);
    CHECK_THROWS(q.schedule(5, [] {}));
    q.schedule(10, [] {}); // same-instant is fine
}

TEST_CASE("empty queue runs to time zero") {
    EventQueue q;
    CHECK(q.run_until_quiescent(1) == 0);
}

TEST_CASE("event budget guards against livelock") {
    EventQueue q;
    std::function<void()> spin = [&] { q.schedule(q.now() + 1, spin); };
    q.schedule(0, spin);
    CHECK_THROWS(q.run_until_quiescent(1000));
}

TEST_CASE("conservation: every sent message is delivered exactly once") {
    EventQueue q;
    Network net(q);
    net.add_link(LinkSpec{0, 1, 1'000'000, 100});
    net.add_link(LinkSpec{1, 2, 1'000'000, 100});
    for (int i = 0; i < 50; ++i) net.send(0, 1, 100, static_cast<std::uint64_t>(i), [](int, std::uint64_t) {});
    for (int i = 0; i < 30; ++i) net.send(1, 2, 900, static_cast<std::uint64_t>(i), [](int, std::uint64_t) {});
    q.run_until_quiescent(1000);
    CHECK(net.sent_count() == 80);
    CHECK(net.delivered_count() == 80);
}

TEST_CASE("identical schedules replay identically") {
    auto run = [] {
        EventQueue q;
        Network net(q);
        net.add_link(LinkSpec{0, 1, 3'000'000, 250});
        std::vector<std::pair<SimTime, std::uint64_t>> log;
        for (std::uint64_t i = 0; i < 40; ++i) {
            q.schedule(static_cast<SimTime>(i % 7) * 11, [&net, &log, i, &q] {
                net.send(0, 1, 64 + i * 13, i, [&log, &q](int, std::uint64_t id) {
                    log.emplace_back(q.now(), id);
                });
            });
        }
        q.run_until_quiescent(10'000);
        return log;
    };
    CHECK(run() == run());
}
