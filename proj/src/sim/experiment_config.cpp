#include "rtsync/agent/commands.hpp"
#include "rtsync/sim/experiment.hpp"

#include <fstream>
#include <set>
#include <stdexcept>

namespace rtsync::sim {

namespace {

void check_keys(const nlohmann::json& j, const std::set<std::string>& known, const char* what) {
    for (const auto& [key, _] : j.items()) {
        if (!known.count(key)) {
            throw std::invalid_argument(std::string("unknown ") + what + " key: " + key);
        }
    }
}

ExperimentConfig parse(const nlohmann::json& j) {
    if (!j.is_object()) {
        throw std::invalid_argument("experiment config must be a JSON object");
    }
    check_keys(j,
               {"name", "seed", "duration_ms", "drain_ms", "start_epoch_ms", "uplink", "downlink", "client_link",
                "sensors", "agent", "subscribers", "load_rate_hz", "commands", "periodic_commands",
                "heartbeat_timeout_ms", "client_ping_ms", "trace"},
               "experiment");
    ExperimentConfig c;
    c.name = j.value("name", c.name);
    c.seed = j.value("seed", c.seed);
    c.duration_ms = j.value("duration_ms", c.duration_ms);
    c.drain_ms = j.value("drain_ms", c.drain_ms);
    c.start_epoch_ms = j.value("start_epoch_ms", c.start_epoch_ms);
    if (const auto it = j.find("uplink"); it != j.end()) {
        c.uplink = link_model_from_json(*it);
    }
    if (const auto it = j.find("downlink"); it != j.end()) {
        c.downlink = link_model_from_json(*it);
    }
    if (const auto it = j.find("client_link"); it != j.end()) {
        c.client_link = link_model_from_json(*it);
    }
    if (const auto it = j.find("sensors"); it != j.end()) {
        c.sensors = sensor_model_from_json(*it);
    }
    if (const auto it = j.find("agent"); it != j.end()) {
        c.agent = agent::agent_config_from_json(*it);
    }
    c.subscribers = j.value("subscribers", c.subscribers);
    c.load_rate_hz = j.value("load_rate_hz", c.load_rate_hz);
    if (const auto it = j.find("commands"); it != j.end()) {
        for (const auto& cmd : *it) {
            check_keys(cmd, {"at_ms", "target", "value"}, "command");
            c.commands.push_back(ScriptedCommand{cmd.at("at_ms").get<std::int64_t>(),
                                                 cmd.at("target").get<std::string>(), cmd.at("value").get<bool>()});
        }
    }
    if (const auto it = j.find("periodic_commands"); it != j.end()) {
        check_keys(*it, {"start_ms", "every_ms", "count"}, "periodic_commands");
        c.periodic.start_ms = it->value("start_ms", c.periodic.start_ms);
        c.periodic.every_ms = it->value("every_ms", c.periodic.every_ms);
        c.periodic.count = it->value("count", c.periodic.count);
    }
    c.heartbeat_timeout_ms = j.value("heartbeat_timeout_ms", c.heartbeat_timeout_ms);
    c.client_ping_ms = j.value("client_ping_ms", c.client_ping_ms);
    c.trace = j.value("trace", c.trace);
    return c;
}

std::optional<std::string> validate(const ExperimentConfig& c) {
    if (c.duration_ms <= 0 || c.drain_ms < 0) {
        return "duration_ms must be positive and drain_ms non-negative";
    }
    if (c.start_epoch_ms < 0) {
        return "start_epoch_ms must be non-negative";
    }
    if (c.subscribers > 1000) {
        return "at most 1000 subscribers";
    }
    if (!(c.load_rate_hz >= 0 && c.load_rate_hz <= 1000)) {
        return "load_rate_hz must be in [0, 1000]";
    }
    for (const auto& cmd : c.commands) {
        if (!agent::known_target(cmd.target)) {
            return "unknown command target " + cmd.target;
        }
        if (cmd.at_ms < 0 || cmd.at_ms >= c.duration_ms) {
            return "command time outside the run";
        }
    }
    if (c.periodic.count > 0 && c.periodic.every_ms <= 0) {
        return "periodic_commands.every_ms must be positive";
    }
    if (c.periodic.count > 0 &&
        c.periodic.start_ms + static_cast<std::int64_t>(c.periodic.count - 1) * c.periodic.every_ms >= c.duration_ms) {
        return "periodic commands run past the end of the run";
    }
    if (c.heartbeat_timeout_ms <= 0 || c.client_ping_ms <= 0) {
        return "heartbeat_timeout_ms and client_ping_ms must be positive";
    }
    return std::nullopt;
}

} // namespace

Result<ExperimentConfig, ConfigInvalid> experiment_config_from_json(const nlohmann::json& j) {
    ExperimentConfig c;
    try {
        c = parse(j);
    } catch (const std::exception& e) {
        return fail(ConfigInvalid{e.what()});
    }
    if (auto problem = validate(c)) {
        return fail(ConfigInvalid{*problem});
    }
    return c;
}

nlohmann::json to_json(const ExperimentConfig& c) {
    nlohmann::json cmds = nlohmann::json::array();
    for (const auto& cmd : c.commands) {
        cmds.push_back({{"at_ms", cmd.at_ms}, {"target", cmd.target}, {"value", cmd.value}});
    }
    return {{"name", c.name},
            {"seed", c.seed},
            {"duration_ms", c.duration_ms},
            {"drain_ms", c.drain_ms},
            {"start_epoch_ms", c.start_epoch_ms},
            {"uplink", to_json(c.uplink)},
            {"downlink", to_json(c.downlink)},
            {"client_link", to_json(c.client_link)},
            {"sensors", to_json(c.sensors)},
            {"agent", agent::to_json(c.agent)},
            {"subscribers", c.subscribers},
            {"load_rate_hz", c.load_rate_hz},
            {"commands", cmds},
            {"periodic_commands",
             {{"start_ms", c.periodic.start_ms}, {"every_ms", c.periodic.every_ms}, {"count", c.periodic.count}}},
            {"heartbeat_timeout_ms", c.heartbeat_timeout_ms},
            {"client_ping_ms", c.client_ping_ms},
            {"trace", c.trace}};
}

ExperimentConfig load_experiment_config(const std::string& file) {
    std::ifstream in(file);
    if (!in) {
        throw std::runtime_error("cannot open experiment config " + file);
    }
    auto parsed = experiment_config_from_json(nlohmann::json::parse(in));
    if (!parsed) {
        throw std::invalid_argument(file + ": " + parsed.error().reason);
    }
    return std::move(parsed).value();
}

} // namespace rtsync::sim
