#include "migrasim/protocol.hpp"

#include <array>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace migrasim {

namespace {

constexpr std::array<const char*, 15> kTaskNames = {
    "ControlMessage", "BufferStreams",  "StopStreams",        "StartStreams",
    "Redirect",       "AddNextHop",     "RemoveNextHop",      "MoveState",
    "MoveImmutableState", "MoveIncrementalState", "ReplicateCheckpoint", "Schedule",
    "StartQuery",     "StopQuery",      "RequestMigration",
};

TaskKind task_kind_from_name(const std::string& name) {
    if (name == "Resume") return TaskKind::StartStreams;
    for (std::size_t i = 0; i < kTaskNames.size(); ++i) {
        if (name == kTaskNames[i]) return static_cast<TaskKind>(i);
    }
    throw std::runtime_error("unknown task kind: " + name);
}

std::string target_to_string(const TargetSpec& t) {
    switch (t.role) {
    case Role::Coordinator: return "coordinator";
    case Role::OldHost: return "old-host";
    case Role::NewHost: return "new-host";
    case Role::Upstream: return "upstream";
    case Role::Downstream: return "downstream";
    case Role::Explicit: return "node:" + std::to_string(t.node);
    case Role::None: return "";
    }
    return "";
}

TargetSpec target_from_string(const std::string& s) {
    TargetSpec t;
    if (s == "coordinator") t.role = Role::Coordinator;
    else if (s == "old-host") t.role = Role::OldHost;
    else if (s == "new-host") t.role = Role::NewHost;
    else if (s == "upstream") t.role = Role::Upstream;
    else if (s == "downstream") t.role = Role::Downstream;
    else if (s.rfind("node:", 0) == 0) {
        t.role = Role::Explicit;
        t.node = std::stoi(s.substr(5));
    } else {
        throw std::runtime_error("unknown target: " + s);
    }
    return t;
}

const char* streams_name(StreamSel s) {
    switch (s) {
    case StreamSel::QueryInputs: return "inputs";
    case StreamSel::QueryOutputs: return "outputs";
    case StreamSel::None: return "";
    }
    return "";
}

StreamSel streams_from_name(const std::string& s) {
    if (s == "inputs") return StreamSel::QueryInputs;
    if (s == "outputs") return StreamSel::QueryOutputs;
    throw std::runtime_error("unknown stream selector: " + s);
}

} // namespace

const char* task_kind_name(TaskKind k) { return kTaskNames[static_cast<std::size_t>(k)]; }

nlohmann::json task_to_json(const ControlTask& task) {
    nlohmann::json j;
    j["task"] = (task.kind == TaskKind::StartStreams && task.resume_alias) ? "Resume"
                                                                           : task_kind_name(task.kind);
    if (task.target.role != Role::None) j["target"] = target_to_string(task.target);
    if (task.streams != StreamSel::None) j["streams"] = streams_name(task.streams);
    if (task.from.role != Role::None) j["from"] = target_to_string(task.from);
    if (task.to.role != Role::None) j["to"] = target_to_string(task.to);
    if (task.when == FirePoint::Takeover) j["at"] = "takeover";
    if (!task.body.empty()) j["do"] = program_to_json(task.body);
    return j;
}

ControlTask task_from_json(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("task")) throw std::runtime_error("task must be an object with a 'task' field");
    ControlTask t;
    const std::string name = j.at("task").get<std::string>();
    t.kind = task_kind_from_name(name);
    t.resume_alias = (name == "Resume");
    for (auto it = j.begin(); it != j.end(); ++it) {
        const std::string& key = it.key();
        if (key == "task") continue;
        if (key == "target") t.target = target_from_string(it.value().get<std::string>());
        else if (key == "streams") t.streams = streams_from_name(it.value().get<std::string>());
        else if (key == "from") t.from = target_from_string(it.value().get<std::string>());
        else if (key == "to") t.to = target_from_string(it.value().get<std::string>());
        else if (key == "at") {
            if (it.value().get<std::string>() != "takeover") throw std::runtime_error("unknown fire point");
            t.when = FirePoint::Takeover;
        } else if (key == "do") t.body = program_from_json(it.value());
        else throw std::runtime_error("unknown task field: " + key);
    }
    return t;
}

nlohmann::json program_to_json(const std::vector<ControlTask>& tasks) {
    nlohmann::json arr = nlohmann::json::array();
    for (const ControlTask& t : tasks) arr.push_back(task_to_json(t));
    return arr;
}

std::vector<ControlTask> program_from_json(const nlohmann::json& j) {
    if (!j.is_array()) throw std::runtime_error("a task program is a JSON array");
    std::vector<ControlTask> tasks;
    for (const auto& item : j) tasks.push_back(task_from_json(item));
    return tasks;
}

} // namespace migrasim
