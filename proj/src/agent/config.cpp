#include "rtsync/agent/config.hpp"

#include <fstream>
#include <set>
#include <stdexcept>

namespace rtsync::agent {

namespace {

template <typename T>
void read(const nlohmann::json& j, const char* key, T& out) {
    if (const auto it = j.find(key); it != j.end()) {
        out = it->get<T>();
    }
}

} // namespace

AgentConfig agent_config_from_json(const nlohmann::json& j) {
    if (!j.is_object()) {
        throw std::invalid_argument("agent config must be a JSON object");
    }
    static const std::set<std::string> known = {
        "server", "token", "device_id", "action_log", "sample_period_ms", "backoff", "max_attempts",
        "retry_after_ms", "buffer_capacity", "max_in_flight", "ack_timeout_ms", "staleness_window_ms",
        "status_interval_ms", "heartbeat_interval_ms", "sync_timeout_ms", "health_interval_ms",
        "health_phase_ms", "safe_mode_threshold", "reset_delay_ms", "buffer_alarm_fraction"};
    for (const auto& [key, _] : j.items()) {
        if (!known.count(key)) {
            throw std::invalid_argument("unknown agent config key: " + key);
        }
    }
    AgentConfig c;
    read(j, "server", c.server);
    read(j, "token", c.token);
    read(j, "device_id", c.device_id);
    read(j, "action_log", c.action_log);
    read(j, "sample_period_ms", c.sample_period_ms);
    if (const auto it = j.find("backoff"); it != j.end()) {
        read(*it, "base_ms", c.backoff.base_ms);
        read(*it, "factor", c.backoff.factor);
        read(*it, "cap_ms", c.backoff.cap_ms);
    }
    read(j, "max_attempts", c.max_attempts);
    read(j, "retry_after_ms", c.retry_after_ms);
    read(j, "buffer_capacity", c.buffer_capacity);
    read(j, "max_in_flight", c.max_in_flight);
    read(j, "ack_timeout_ms", c.ack_timeout_ms);
    read(j, "staleness_window_ms", c.staleness_window_ms);
    read(j, "status_interval_ms", c.status_interval_ms);
    read(j, "heartbeat_interval_ms", c.heartbeat_interval_ms);
    read(j, "sync_timeout_ms", c.sync_timeout_ms);
    read(j, "health_interval_ms", c.health_interval_ms);
    read(j, "health_phase_ms", c.health_phase_ms);
    read(j, "safe_mode_threshold", c.safe_mode_threshold);
    read(j, "reset_delay_ms", c.reset_delay_ms);
    read(j, "buffer_alarm_fraction", c.buffer_alarm_fraction);

    if (c.sample_period_ms <= 0 || c.max_attempts == 0 || c.buffer_capacity == 0 || c.max_in_flight == 0 ||
        c.backoff.base_ms <= 0 || c.backoff.factor < 1 || c.backoff.cap_ms < c.backoff.base_ms ||
        c.health_interval_ms <= 0 || c.heartbeat_interval_ms <= 0 || c.status_interval_ms <= 0) {
        throw std::invalid_argument("agent config: periods, capacities and attempts must be positive");
    }
    return c;
}

nlohmann::json to_json(const AgentConfig& c) {
    return {
        {"server", c.server},
        {"token", c.token},
        {"device_id", c.device_id},
        {"action_log", c.action_log},
        {"sample_period_ms", c.sample_period_ms},
        {"backoff", {{"base_ms", c.backoff.base_ms}, {"factor", c.backoff.factor}, {"cap_ms", c.backoff.cap_ms}}},
        {"max_attempts", c.max_attempts},
        {"retry_after_ms", c.retry_after_ms},
        {"buffer_capacity", c.buffer_capacity},
        {"max_in_flight", c.max_in_flight},
        {"ack_timeout_ms", c.ack_timeout_ms},
        {"staleness_window_ms", c.staleness_window_ms},
        {"status_interval_ms", c.status_interval_ms},
        {"heartbeat_interval_ms", c.heartbeat_interval_ms},
        {"sync_timeout_ms", c.sync_timeout_ms},
        {"health_interval_ms", c.health_interval_ms},
        {"health_phase_ms", c.health_phase_ms},
        {"safe_mode_threshold", c.safe_mode_threshold},
        {"reset_delay_ms", c.reset_delay_ms},
        {"buffer_alarm_fraction", c.buffer_alarm_fraction},
    };
}

AgentConfig load_agent_config(const std::string& file) {
    std::ifstream in(file);
    if (!in) {
        throw std::runtime_error("cannot open agent config " + file);
    }
    return agent_config_from_json(nlohmann::json::parse(in));
}

} // namespace rtsync::agent
