#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <nlohmann/json.hpp>

#include "migrasim/algorithms.hpp"
#include "migrasim/protocol.hpp"

using namespace migrasim;

namespace {

ControlTask mk(TaskKind k) {
    ControlTask t;
    t.kind = k;
    return t;
}

TargetSpec role(Role r) {
    TargetSpec t;
    t.role = r;
    return t;
}

TargetSpec node(std::int32_t id) {
    TargetSpec t;
    t.role = Role::Explicit;
    t.node = id;
    return t;
}

} // namespace

TEST_CASE("every task kind serializes under a distinct name and round-trips") {
    const int kinds = 15;
    std::vector<std::string> names;
    for (int i = 0; i < kinds; ++i) {
        ControlTask t = mk(static_cast<TaskKind>(i));
        nlohmann::json j = task_to_json(t);
        names.push_back(j.at("task").get<std::string>());
        ControlTask back = task_from_json(j);
        CHECK(back == t);
    }
    std::sort(names.begin(), names.end());
    CHECK(std::adjacent_find(names.begin(), names.end()) == names.end());
}

TEST_CASE("resume alias survives the wire; plain start-streams does not gain it") {
    ControlTask resume = mk(TaskKind::StartStreams);
    resume.resume_alias = true;
    resume.streams = StreamSel::QueryInputs;
    nlohmann::json j = task_to_json(resume);
    CHECK(j.at("task") == "Resume");
    ControlTask back = task_from_json(j);
    CHECK(back.kind == TaskKind::StartStreams);
    CHECK(back.resume_alias);
    CHECK(back == resume);

    ControlTask plain = mk(TaskKind::StartStreams);
    plain.streams = StreamSel::QueryOutputs;
    nlohmann::json pj = task_to_json(plain);
    CHECK(pj.at("task") == "StartStreams");
    CHECK(task_from_json(pj) == plain);
}

TEST_CASE("targets and hop arguments round-trip, including explicit node ids") {
    ControlTask t = mk(TaskKind::Redirect);
    t.streams = StreamSel::QueryInputs;
    t.from = role(Role::OldHost);
    t.to = node(7);
    nlohmann::json j = task_to_json(t);
    CHECK(j.at("from") == "old-host");
    CHECK(j.at("to") == "node:7");
    CHECK(task_from_json(j) == t);

    for (Role r : {Role::Coordinator, Role::OldHost, Role::NewHost, Role::Upstream, Role::Downstream}) {
        ControlTask cm = mk(TaskKind::ControlMessage);
        cm.target = role(r);
        cm.body.push_back(mk(TaskKind::StopQuery));
        CHECK(task_from_json(task_to_json(cm)) == cm);
    }
}

TEST_CASE("fire points and nested bodies round-trip") {
    ControlTask sched = mk(TaskKind::Schedule);
    ControlTask inner = mk(TaskKind::RemoveNextHop);
    inner.streams = StreamSel::QueryInputs;
    inner.to = role(Role::OldHost);
    inner.when = FirePoint::Takeover;
    sched.body.push_back(inner);

    ControlTask outer = mk(TaskKind::ControlMessage);
    outer.target = role(Role::Upstream);
    outer.body.push_back(sched);
    ControlTask hop = mk(TaskKind::AddNextHop);
    hop.streams = StreamSel::QueryInputs;
    hop.to = role(Role::NewHost);
    outer.body.push_back(hop);

    nlohmann::json j = task_to_json(outer);
    CHECK(j.at("do").at(0).at("do").at(0).at("at") == "takeover");
    CHECK(task_from_json(j) == outer);
}

TEST_CASE("the seven built-in programs survive a serialize/parse cycle exactly") {
    for (Variant v : all_variants()) {
        ProgramOptions opts;
        if (v == Variant::SingleTrackAllAtOnce) opts.buffer_at_upstream = true;
        MigrationPlan plan = build_program(v, opts);
        REQUIRE(!plan.phases.empty());
        for (const auto& phase : plan.phases) {
            nlohmann::json j = program_to_json(phase);
            std::vector<ControlTask> back = program_from_json(j);
            CHECK(back == phase);
            // Text form is stable across a parse cycle too.
            CHECK(program_to_json(back).dump() == j.dump());
        }
    }
}

TEST_CASE("malformed task documents are rejected") {
    CHECK_THROWS_AS(task_from_json(nlohmann::json::parse(R"({"task":"Teleport"})")), std::runtime_error);
    CHECK_THROWS_AS(task_from_json(nlohmann::json::parse(R"({"task":"StopQuery","color":"red"})")),
                    std::runtime_error);
    CHECK_THROWS_AS(task_from_json(nlohmann::json::parse(R"(["StopQuery"])")), std::runtime_error);
    CHECK_THROWS_AS(task_from_json(nlohmann::json::parse(R"({"target":"old-host"})")), std::runtime_error);
    CHECK_THROWS_AS(task_from_json(nlohmann::json::parse(R"({"task":"Redirect","from":"elsewhere"})")),
                    std::runtime_error);
    CHECK_THROWS_AS(task_from_json(nlohmann::json::parse(R"({"task":"StopStreams","streams":"sideways"})")),
                    std::runtime_error);
    CHECK_THROWS_AS(task_from_json(nlohmann::json::parse(R"({"task":"RemoveNextHop","at":"sunrise"})")),
                    std::runtime_error);
    CHECK_THROWS_AS(program_from_json(nlohmann::json::parse(R"({"task":"StopQuery"})")), std::runtime_error);
}

TEST_CASE("variant names round-trip and unknown names are refused") {
    for (Variant v : all_variants()) {
        auto back = variant_from_name(variant_name(v));
        REQUIRE(back.has_value());
        CHECK(*back == v);
    }
    CHECK(!variant_from_name("teleportation").has_value());
    CHECK(!variant_from_name("").has_value());
}
