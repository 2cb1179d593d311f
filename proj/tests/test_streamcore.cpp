#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <map>
#include <set>
#include <vector>

#include "migrasim/rng.hpp"
#include "migrasim/streamcore.hpp"

using namespace migrasim;

namespace {

QueryDef join_def() {
    QueryDef q;
    q.id = 1;
    q.name = "j";
    q.kind = OpKind::Join;
    q.input_streams = {10, 11}; // build, probe
    q.output_stream = 20;
    return q;
}

QueryDef agg_def(SimTime extent, SimTime slide) {
    QueryDef q;
    q.id = 2;
    q.name = "a";
    q.kind = OpKind::Aggregate;
    q.input_streams = {12};
    q.output_stream = 21;
    q.window = WindowSpec{extent, slide};
    return q;
}

Tuple build_tuple(std::uint64_t seq, std::int64_t key, SimTime ts, std::uint32_t bytes = 100) {
    return Tuple{10, key, ts, seq, bytes, 0};
}
Tuple probe_tuple(std::uint64_t seq, std::int64_t key, SimTime ts, std::uint32_t bytes = 50) {
    return Tuple{11, key, ts, seq, bytes, 0};
}

} // namespace

TEST_CASE("join stores build side per key and probes emit one output per stored entry") {
    Operator op(join_def());
    std::vector<Tuple> out;
    op.process(build_tuple(1, 7, 100), out);
    op.process(build_tuple(2, 7, 200), out);
    op.process(build_tuple(3, 9, 250), out);
    op.process(build_tuple(4, 7, 300), out);
    CHECK(out.empty());

    op.process(probe_tuple(5, 7, 400), out);
    REQUIRE(out.size() == 3); // one per stored entry under key 7, in stored order
    CHECK(out[0].seq == join_out_seq(5, 1));
    CHECK(out[1].seq == join_out_seq(5, 2));
    CHECK(out[2].seq == join_out_seq(5, 4));
    CHECK(out[0].key == 7);
    CHECK(out[0].ts == 400);               // output carries the probe's event time
    CHECK(out[0].payload_bytes == 150);    // probe + build payload
    CHECK(out[0].stream == 20);

    out.clear();
    op.process(probe_tuple(6, 8, 500), out);
    CHECK(out.empty()); // no stored entries under key 8

    // Entries are retained: a second probe matches again.
    op.process(probe_tuple(7, 9, 600), out);
    REQUIRE(out.size() == 1);
    CHECK(out[0].seq == join_out_seq(7, 3));
}

TEST_CASE("join against a brute-force oracle on a random interleaving") {
    Rng rng(42);
    Operator op(join_def());
    struct Src {
        std::uint64_t seq;
        std::int64_t key;
        bool is_probe;
    };
    std::vector<Src> history;
    std::vector<std::pair<std::uint64_t, std::uint64_t>> expected;
    std::vector<Tuple> out;
    std::uint64_t bseq = 0, pseq = 0;
    for (int i = 0; i < 2000; ++i) {
        SimTime ts = i * 10;
        std::int64_t key = rng.uniform_i64(0, 12);
        bool probe = rng.uniform_unit() < 0.4;
        if (probe) {
            ++pseq;
            for (const Src& s : history) {
                if (!s.is_probe && s.key == key) expected.emplace_back(pseq, s.seq);
            }
            history.push_back(Src{pseq, key, true});
            op.process(probe_tuple(pseq, key, ts), out);
        } else {
            ++bseq;
            history.push_back(Src{bseq, key, false});
            op.process(build_tuple(bseq, key, ts), out);
        }
    }
    REQUIRE(out.size() == expected.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        CHECK(out[i].seq == join_out_seq(expected[i].first, expected[i].second));
    }
}

TEST_CASE("tumbling windows count per key and close when the watermark passes the end") {
    Operator op(agg_def(1000, 1000));
    std::vector<Tuple> out;
    op.process(Tuple{12, 1, 100, 1, 8, 0}, out);
    op.process(Tuple{12, 1, 600, 2, 8, 0}, out);
    op.process(Tuple{12, 2, 900, 3, 8, 0}, out);
    CHECK(out.empty()); // watermark 900 < 1000: window still open
    op.process(Tuple{12, 1, 1000, 4, 8, 0}, out);
    REQUIRE(out.size() == 2); // [0,1000) closed for keys 1 and 2, ascending key order
    CHECK(out[0].key == 1);
    CHECK(out[0].value == 2);
    CHECK(out[0].ts == 1000); // output timestamped at window close
    CHECK(out[0].seq == window_out_seq(0, 1));
    CHECK(out[0].payload_bytes == 16);
    CHECK(out[1].key == 2);
    CHECK(out[1].value == 1);

    out.clear();
    op.advance_watermark(2000, out); // cut: closes [1000,2000) without a tuple
    REQUIRE(out.size() == 1);
    CHECK(out[0].key == 1);
    CHECK(out[0].value == 1);
    CHECK(out[0].seq == window_out_seq(1, 1));
}

TEST_CASE("sliding windows include each tuple in every overlapping extent") {
    Operator op(agg_def(1000, 500));
    std::vector<Tuple> out;
    op.process(Tuple{12, 3, 700, 1, 8, 0}, out); // windows [0,1000) and [500,1500)
    op.advance_watermark(2000, out);
    REQUIRE(out.size() == 2);
    CHECK(out[0].seq == window_out_seq(0, 3));
    CHECK(out[0].value == 1);
    CHECK(out[1].seq == window_out_seq(1, 3));
    CHECK(out[1].value == 1);
}

TEST_CASE("sliding windows against a brute-force oracle") {
    const SimTime extent = 900, slide = 300;
    Operator op(agg_def(extent, slide));
    Rng rng(7);
    std::vector<std::pair<SimTime, std::int64_t>> tuples;
    std::vector<Tuple> out;
    SimTime ts = 0;
    for (std::uint64_t i = 1; i <= 1500; ++i) {
        ts += rng.uniform_i64(0, 40);
        std::int64_t key = rng.uniform_i64(0, 5);
        tuples.emplace_back(ts, key);
        op.process(Tuple{12, key, ts, i, 8, 0}, out);
    }
    op.advance_watermark(ts + extent + slide, out);

    std::map<std::pair<SimTime, std::int64_t>, std::int64_t> oracle;
    for (auto& [t, k] : tuples) {
        for (SimTime s = (t / slide) * slide; s > t - extent && s >= 0; s -= slide) oracle[{s, k}]++;
    }
    REQUIRE(out.size() == oracle.size());
    for (const Tuple& o : out) {
        SimTime start = o.ts - extent;
        CHECK(oracle.at({start, o.key}) == o.value);
    }
}

TEST_CASE("watermark is the maximum timestamp seen") {
    Operator op(join_def());
    std::vector<Tuple> out;
    CHECK(op.watermark() == -1);
    op.process(build_tuple(1, 1, 500), out);
    CHECK(op.watermark() == 500);
    op.process(probe_tuple(1, 1, 300), out); // other stream lags
    CHECK(op.watermark() == 500);
    op.process(build_tuple(2, 1, 800), out);
    CHECK(op.watermark() == 800);
}

TEST_CASE("output sequence numbers are strictly increasing per instance") {
    Operator agg(agg_def(100, 100));
    Rng rng(3);
    std::vector<Tuple> out;
    for (std::uint64_t i = 1; i <= 4000; ++i) {
        std::int64_t key = rng.uniform_i64(0, 9);
        agg.process(Tuple{12, key, static_cast<SimTime>(i * 3), i, 8, 0}, out);
    }
    agg.advance_watermark(1'000'000, out);
    for (std::size_t i = 1; i < out.size(); ++i) CHECK(out[i].seq > out[i - 1].seq);

    Operator join(join_def());
    std::vector<Tuple> jout;
    std::uint64_t b = 0, p = 0;
    for (int i = 0; i < 3000; ++i) {
        std::int64_t key = rng.uniform_i64(0, 4);
        if (rng.uniform_unit() < 0.5) {
            join.process(build_tuple(++b, key, i), jout);
        } else {
            join.process(probe_tuple(++p, key, i), jout);
        }
    }
    for (std::size_t i = 1; i < jout.size(); ++i) CHECK(jout[i].seq > jout[i - 1].seq);
}

TEST_CASE("inputs at or below the covered mark are dropped") {
    Operator donor(join_def());
    std::vector<Tuple> out;
    donor.process(build_tuple(1, 5, 10), out);
    donor.process(build_tuple(2, 5, 20), out);
    donor.process(probe_tuple(1, 5, 30), out);
    out.clear();

    Operator receiver(join_def());
    receiver.load(donor.extract(0));
    CHECK_FALSE(receiver.process(build_tuple(2, 5, 20), out)); // already in loaded state
    CHECK_FALSE(receiver.process(probe_tuple(1, 5, 30), out)); // output already produced upstream
    CHECK(receiver.covered_drops() == 2);
    CHECK(out.empty());
    CHECK(receiver.process(build_tuple(3, 5, 40), out));
    CHECK(receiver.process(probe_tuple(2, 5, 50), out));
    CHECK(out.size() == 3); // three stored entries now
}

TEST_CASE("full extraction round-trips through load") {
    Operator a(join_def());
    std::vector<Tuple> scratch;
    Rng rng(11);
    std::uint64_t b = 0, p = 0;
    for (int i = 0; i < 500; ++i) {
        std::int64_t key = rng.uniform_i64(0, 20);
        if (rng.uniform_unit() < 0.7) {
            a.process(build_tuple(++b, key, i * 2), scratch);
        } else {
            a.process(probe_tuple(++p, key, i * 2), scratch);
        }
    }
    StateBlob full = a.extract(0);
    CHECK(full.kind == BlobKind::Full);
    CHECK(full.watermark == a.watermark());

    Operator c(join_def());
    c.load(full);
    StateBlob again = c.extract(0);
    CHECK(again.records == full.records);
    CHECK(again.covered_seq == full.covered_seq);
    CHECK(c.watermark() == a.watermark());

    // Identical probes now yield identical outputs on both instances.
    std::vector<Tuple> out_a, out_c;
    a.process(probe_tuple(p + 1, 13, 5000), out_a);
    c.process(probe_tuple(p + 1, 13, 5000), out_c);
    CHECK(out_a == out_c);
}

TEST_CASE("incremental extraction carries exactly the records after the mark") {
    Operator op(agg_def(1000, 1000));
    std::vector<Tuple> scratch;
    op.process(Tuple{12, 1, 100, 1, 8, 0}, scratch);
    op.process(Tuple{12, 2, 200, 2, 8, 0}, scratch);
    std::uint64_t mark = op.mark();
    StateBlob base = op.extract(0);

    op.process(Tuple{12, 1, 300, 3, 8, 0}, scratch); // touches key 1 again
    StateBlob inc = op.extract(mark);
    CHECK(inc.kind == BlobKind::Incremental);
    CHECK(inc.base_version == mark);
    REQUIRE(inc.records.size() == 1); // only the touched accumulator
    CHECK(inc.records[0].key == 1);
    CHECK(inc.records[0].aux == 2); // increments carry the full current value

    // base + increment, flattened, loads to the same state as a full
    // extraction. (Chains flatten with replace semantics before loading;
    // loading applies additive merge for live parallel state.)
    Checkpoint chain;
    chain.add(base);
    chain.add(inc);
    Operator via_chain(agg_def(1000, 1000));
    via_chain.load(chain.reconstruct());
    Operator via_full(agg_def(1000, 1000));
    via_full.load(op.extract(0));
    std::vector<Tuple> out_chain, out_full;
    via_chain.advance_watermark(5000, out_chain);
    via_full.advance_watermark(5000, out_full);
    CHECK(out_chain == out_full);
}

TEST_CASE("accumulator loads merge disjoint contributions additively") {
    // A replica that processed tuples 3..4 itself receives state covering 1..2.
    Operator donor(agg_def(1000, 1000));
    std::vector<Tuple> scratch;
    donor.process(Tuple{12, 1, 100, 1, 8, 0}, scratch);
    donor.process(Tuple{12, 1, 200, 2, 8, 0}, scratch);

    Operator replica(agg_def(1000, 1000));
    replica.process(Tuple{12, 1, 300, 3, 8, 0}, scratch);
    replica.process(Tuple{12, 1, 400, 4, 8, 0}, scratch);
    replica.load(donor.extract(0));

    std::vector<Tuple> out;
    replica.advance_watermark(1000, out);
    REQUIRE(out.size() == 1);
    CHECK(out[0].value == 4);
}

TEST_CASE("loading skips window groups already closed at the blob's horizon") {
    // A flattened checkpoint chain can carry a group from an early increment
    // whose window the donor closed (and emitted) before the final increment.
    Operator donor(agg_def(1000, 1000));
    std::vector<Tuple> scratch;
    donor.process(Tuple{12, 1, 100, 1, 8, 0}, scratch);

    StateBlob flattened = donor.extract(0);
    CHECK(flattened.records.size() == 1);
    // The chain's horizon later advanced past the window's end.
    flattened.watermark = 1500;

    Operator replica(agg_def(1000, 1000));
    replica.load(flattened);
    CHECK(replica.record_count() == 0);
    CHECK(replica.watermark() == 1500);

    std::vector<Tuple> out;
    replica.advance_watermark(5000, out);
    CHECK(out.empty()); // the spent window is not replayed

    // A live extraction never carries spent groups, so a plain round-trip
    // still loads everything.
    Operator replica2(agg_def(1000, 1000));
    replica2.load(donor.extract(0));
    CHECK(replica2.record_count() == 1);
}

TEST_CASE("replica suppression rules") {
    SUBCASE("inputs below the emit floor produce no outputs but still build state") {
        Operator op(join_def());
        ReplicaRules r;
        r.emit_input_floor = 1000;
        op.set_rules(r);
        std::vector<Tuple> out;
        op.process(build_tuple(1, 5, 500), out);
        op.process(probe_tuple(1, 5, 600), out); // suppressed: ts < 1000
        CHECK(out.empty());
        CHECK(op.suppressed_outputs() == 1);
        op.process(probe_tuple(2, 5, 1000), out); // at the floor: emitted
        CHECK(out.size() == 1);
    }
    SUBCASE("windows closing at or before the handover are suppressed") {
        Operator op(agg_def(1000, 1000));
        ReplicaRules r;
        r.window_emit_after = 2000;
        op.set_rules(r);
        std::vector<Tuple> out;
        op.process(Tuple{12, 1, 500, 1, 8, 0}, out);  // window [0,1000): closes at 1000 <= 2000
        op.process(Tuple{12, 1, 1500, 2, 8, 0}, out); // window [1000,2000): closes at 2000 <= 2000
        op.process(Tuple{12, 1, 2500, 3, 8, 0}, out); // window [2000,3000): closes after 2000
        op.advance_watermark(9000, out);
        REQUIRE(out.size() == 1);
        CHECK(out[0].seq == window_out_seq(2, 1));
        CHECK(op.suppressed_outputs() == 2);
    }
    SUBCASE("windows opened before the observation floor are dropped") {
        Operator op(agg_def(1000, 1000));
        ReplicaRules r;
        r.observe_floor = 1000;
        op.set_rules(r);
        std::vector<Tuple> out;
        op.process(Tuple{12, 1, 900, 1, 8, 0}, out);  // [0,1000): incompletely observed
        op.process(Tuple{12, 1, 1100, 2, 8, 0}, out); // [1000,2000): fully observed
        op.advance_watermark(9000, out);
        REQUIRE(out.size() == 1);
        CHECK(out[0].seq == window_out_seq(1, 1));
    }
}

TEST_CASE("filter passes every key by default and honors pass_every") {
    QueryDef def;
    def.id = 3;
    def.kind = OpKind::Filter;
    def.input_streams = {30};
    def.output_stream = 31;
    Operator all(def);
    std::vector<Tuple> out;
    all.process(Tuple{30, 9, 100, 1, 64, 0}, out);
    REQUIRE(out.size() == 1);
    CHECK(out[0].stream == 31);
    CHECK(out[0].seq == 1); // identity-preserving

    def.pass_every = 3;
    Operator third(def);
    out.clear();
    for (std::uint64_t i = 1; i <= 9; ++i) third.process(Tuple{30, static_cast<std::int64_t>(i), 100, i, 64, 0}, out);
    CHECK(out.size() == 3); // keys 3, 6, 9
}

TEST_CASE("malformed query definitions are rejected") {
    QueryDef q = join_def();
    q.input_streams = {10, 10};
    CHECK_THROWS(Operator{q});
    QueryDef a = agg_def(1000, 300); // extent not a multiple of slide
    CHECK_THROWS(Operator{a});
    QueryDef z = agg_def(0, 0);
    CHECK_THROWS(Operator{z});
}

TEST_CASE("state size accounting matches the size model") {
    Operator op(join_def());
    std::vector<Tuple> scratch;
    for (std::uint64_t i = 1; i <= 10; ++i) op.process(build_tuple(i, 1, i, 1024), scratch);
    CHECK(op.state_bytes() == 10 * (1024 + 32) + 64);
    CHECK(op.record_count() == 10);
    CHECK(op.extract(0).bytes() == op.state_bytes());
}
