#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <nlohmann/json.hpp>

#include "migrasim/metrics.hpp"

using namespace migrasim;

namespace {

LogEntry at(double t_s, LogKind kind, std::int32_t mig, std::uint64_t a = 0, std::uint64_t b = 0) {
    LogEntry e;
    e.t = ns_from_seconds(t_s);
    e.kind = kind;
    e.migration = mig;
    e.a = a;
    e.b = b;
    return e;
}

ArrivalEntry arrival(double t_s, std::int32_t node = 1) {
    ArrivalEntry e;
    e.t = ns_from_seconds(t_s);
    e.node = node;
    return e;
}

} // namespace

TEST_CASE("freeze is the gap from the first stop to the first restart") {
    EventLog log;
    log.record(at(10.0, LogKind::MigrationTriggered, 0, 12));
    log.record(at(10.5, LogKind::OpStopped, 0));
    log.record(at(11.0, LogKind::OpStopped, 0)); // later stops do not extend it
    log.record(at(11.7, LogKind::OpStarted, 0));
    log.record(at(12.0, LogKind::MigrationCompleted, 0));

    MetricsRecord m = compute_metrics(log, 0);
    CHECK(m.status == "completed");
    CHECK(m.trigger_s == doctest::Approx(10.0));
    CHECK(m.done_s == doctest::Approx(12.0));
    CHECK(m.freeze_s == doctest::Approx(1.2));
    CHECK(m.control_expected == 12);
    CHECK(m.affected_inputs == 0);
}

TEST_CASE("a replica started before the old one stopped means zero freeze") {
    EventLog log;
    log.record(at(5.0, LogKind::MigrationTriggered, 3));
    log.record(at(5.2, LogKind::OpStarted, 3));
    log.record(at(5.9, LogKind::OpStopped, 3));
    log.record(at(6.0, LogKind::MigrationCompleted, 3));
    CHECK(compute_metrics(log, 3).freeze_s == 0.0);
}

TEST_CASE("a completed migration whose operator never restarted is an error") {
    EventLog log;
    log.record(at(1.0, LogKind::MigrationTriggered, 0));
    log.record(at(1.5, LogKind::OpStopped, 0));
    log.record(at(2.0, LogKind::MigrationCompleted, 0));
    CHECK_THROWS_AS((void)compute_metrics(log, 0), std::runtime_error);

    EventLog aborted;
    aborted.record(at(1.0, LogKind::MigrationTriggered, 0));
    aborted.record(at(1.5, LogKind::OpStopped, 0));
    aborted.record(at(2.0, LogKind::MigrationAborted, 0));
    MetricsRecord m = compute_metrics(aborted, 0);
    CHECK(m.status == "aborted");
    CHECK(m.freeze_s == 0.0);
}

TEST_CASE("state movement spans first send to last arrival and sums moved bytes") {
    EventLog log;
    log.record(at(2.0, LogKind::MigrationTriggered, 1));
    log.record(at(2.25, LogKind::BlobSent, 1, 1000, 0));
    log.record(at(2.50, LogKind::BlobDelivered, 1, 1000, 0));
    log.record(at(2.60, LogKind::BlobSent, 1, 500, 0));
    log.record(at(2.95, LogKind::BlobDelivered, 1, 500, 0));
    // Replication traffic is tracked separately from the migration move.
    log.record(at(2.70, LogKind::BlobSent, 1, 4096, 1));
    log.record(at(3.10, LogKind::BlobDelivered, 1, 4096, 1));
    log.record(at(3.2, LogKind::MigrationCompleted, 1));

    MetricsRecord m = compute_metrics(log, 1);
    CHECK(m.state_movement_s == doctest::Approx(0.70));
    CHECK(m.state_moved_bytes == 1500);
    CHECK(m.state_replicated_bytes == 4096);
}

TEST_CASE("control and ack counts come from send events; drains accumulate buffers") {
    EventLog log;
    log.record(at(1.0, LogKind::MigrationTriggered, 0, 5));
    log.record(at(1.1, LogKind::CtrlSent, 0));
    log.record(at(1.2, LogKind::CtrlDelivered, 0)); // deliveries are not re-counted
    log.record(at(1.3, LogKind::MarkerSent, 0));
    log.record(at(1.4, LogKind::MarkerDelivered, 0));
    log.record(at(1.5, LogKind::MarkerSent, 0));
    log.record(at(1.6, LogKind::AckSent, 0));
    log.record(at(1.7, LogKind::AckDelivered, 0));
    log.record(at(1.8, LogKind::BufferDrained, 0, 7, 448));
    log.record(at(1.9, LogKind::BufferDrained, 0, 3, 192));
    log.record(at(2.0, LogKind::MigrationCompleted, 0));

    MetricsRecord m = compute_metrics(log, 0);
    CHECK(m.control_messages == 3);
    CHECK(m.control_expected == 5);
    CHECK(m.acks == 1);
    CHECK(m.buffered_tuples == 10);
    CHECK(m.buffered_bytes == 640);
}

TEST_CASE("affected inputs are the arrivals that fell into the freeze window") {
    EventLog log;
    log.record(at(4.0, LogKind::MigrationTriggered, 0));
    log.record(at(4.5, LogKind::OpStopped, 0));
    log.record(at(5.5, LogKind::OpStarted, 0));
    log.record(at(5.6, LogKind::MigrationCompleted, 0));
    log.record_arrival(arrival(4.4));  // before the stop
    log.record_arrival(arrival(4.5));  // boundary: inside
    log.record_arrival(arrival(5.0));  // inside
    log.record_arrival(arrival(5.5));  // boundary: the restart instant is outside
    log.record_arrival(arrival(6.0));  // after

    CHECK(compute_metrics(log, 0).affected_inputs == 2);
}

TEST_CASE("entries are attributed per migration and listed in trigger order") {
    EventLog log;
    log.record(at(1.0, LogKind::MigrationTriggered, 0));
    log.record(at(1.2, LogKind::CtrlSent, 0));
    log.record(at(2.0, LogKind::MigrationTriggered, 1));
    log.record(at(2.1, LogKind::CtrlSent, 1));
    log.record(at(2.2, LogKind::CtrlSent, 1));
    log.record(at(2.5, LogKind::MigrationCompleted, 1));
    log.record(at(3.0, LogKind::MigrationCompleted, 0));

    auto all = compute_all_metrics(log);
    REQUIRE(all.size() == 2);
    CHECK(all[0].migration_id == 0);
    CHECK(all[0].control_messages == 1);
    CHECK(all[0].done_s == doctest::Approx(3.0));
    CHECK(all[1].migration_id == 1);
    CHECK(all[1].control_messages == 2);

    CHECK_THROWS_AS((void)compute_metrics(log, 42), std::runtime_error);
}

TEST_CASE("a migration with no terminal event reports incomplete") {
    EventLog log;
    log.record(at(1.0, LogKind::MigrationTriggered, 0));
    CHECK(compute_metrics(log, 0).status == "incomplete");
}

TEST_CASE("seconds format to exactly six decimals") {
    CHECK(format_seconds(0) == "0.000000");
    CHECK(format_seconds(1.5) == "1.500000");
    CHECK(format_seconds(0.1234564) == "0.123456");
    CHECK(format_seconds(12.0000005001) == "12.000001");
    CHECK(format_seconds(123456.789012) == "123456.789012");
}

TEST_CASE("csv rows are stable, and the header matches the row arity") {
    MetricsRecord m;
    m.migration_id = 2;
    m.variant = "single-track-partial";
    m.status = "completed";
    m.trigger_s = 10.0;
    m.done_s = 10.75;
    m.freeze_s = 0.5;
    m.state_movement_s = 0.25;
    m.state_moved_bytes = 2048;
    m.control_messages = 9;
    m.control_expected = 9;
    m.acks = 9;
    m.affected_inputs = 4;
    m.buffered_tuples = 11;
    m.buffered_bytes = 704;

    const std::string header = metrics_csv_header();
    const std::string bare = metrics_csv_row(m, nullptr);
    CHECK(bare == "2,single-track-partial,completed,10.000000,10.750000,0.500000,0.250000,"
                  "2048,0,9,9,9,4,11,704,0,0,0,0,0.000000,0.000000");
    CHECK(std::count(header.begin(), header.end(), ',') == std::count(bare.begin(), bare.end(), ','));

    LatencyStats lat;
    lat.outputs_compared = 100;
    lat.affected_outputs = 12;
    lat.mean_added_s = 0.2625;
    lat.max_added_s = 0.51;
    const std::string with_lat = metrics_csv_row(m, &lat);
    const std::string tail = "100,12,0.262500,0.510000";
    CHECK(with_lat.substr(with_lat.size() - tail.size()) == tail);
    CHECK(metrics_csv_row(m, &lat) == with_lat); // byte-identical on repeat
}

TEST_CASE("json output carries every field and parses back") {
    MetricsRecord m;
    m.migration_id = 0;
    m.variant = "window-recreation";
    m.status = "completed";
    m.freeze_s = 0.0;
    m.duplicate_sends = 33;
    LatencyStats lat;
    lat.outputs_compared = 10;

    auto parsed = nlohmann::json::parse(metrics_json({m}, {lat}));
    REQUIRE(parsed.is_array());
    REQUIRE(parsed.size() == 1);
    CHECK(parsed[0]["variant"] == "window-recreation");
    CHECK(parsed[0]["duplicate_sends"] == 33);
    CHECK(parsed[0]["outputs_compared"] == 10);
}

TEST_CASE("log digests separate different histories and bind the counters") {
    EventLog a, b;
    LogEntry e = at(1.0, LogKind::CtrlSent, 0);
    a.record(e);
    b.record(e);
    CHECK(a.digest() == b.digest());

    LogEntry shifted = e;
    shifted.t += 1;
    EventLog c;
    c.record(shifted);
    CHECK(a.digest() != c.digest());

    b.counters().tuple_sends += 1;
    CHECK(a.digest() != b.digest());

    // Order matters: the digest is over the sequence, not the multiset.
    EventLog fwd, rev;
    LogEntry e2 = at(2.0, LogKind::AckSent, 0);
    fwd.record(e);
    fwd.record(e2);
    rev.record(e2);
    rev.record(e);
    CHECK(fwd.digest() != rev.digest());

    const char* names_seen[] = {log_kind_name(LogKind::CtrlSent), log_kind_name(LogKind::Warning)};
    CHECK(std::string(names_seen[0]) == "ctrl-sent");
    CHECK(std::string(names_seen[1]) == "warning");
}
