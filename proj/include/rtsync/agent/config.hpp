#pragma once

#include "rtsync/agent/backoff.hpp"

#include <json.hpp>

#include <cstdint>
#include <string>

namespace rtsync::agent {

struct AgentConfig {
    std::string server = "127.0.0.1:7070";
    std::string token = "device-secret";
    std::string device_id = "ESP32_001";
    std::string action_log; // empty: in-memory only

    std::int64_t sample_period_ms = 1'000;
    BackoffPolicy backoff;
    unsigned max_attempts = 3;
    std::int64_t retry_after_ms = 30'000;
    std::size_t buffer_capacity = 1024;
    std::size_t max_in_flight = 4;
    std::int64_t ack_timeout_ms = 5'000;
    std::int64_t staleness_window_ms = 5'000;
    std::int64_t status_interval_ms = 10'000;
    std::int64_t heartbeat_interval_ms = 5'000;
    std::int64_t sync_timeout_ms = 15'000;
    std::int64_t health_interval_ms = 1'000;
    std::int64_t health_phase_ms = 500;
    unsigned safe_mode_threshold = 3;
    std::int64_t reset_delay_ms = 2'000;
    double buffer_alarm_fraction = 0.9;
};

// Missing keys keep their defaults; unknown keys and ill-typed values throw.
AgentConfig agent_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const AgentConfig& c);
AgentConfig load_agent_config(const std::string& file);

} // namespace rtsync::agent
