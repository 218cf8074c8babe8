#pragma once

#include "rtsync/agent/commands.hpp"
#include "rtsync/agent/config.hpp"
#include "rtsync/result.hpp"
#include "rtsync/sim/link.hpp"
#include "rtsync/sim/sensors.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace rtsync::sim {

struct ScriptedCommand {
    std::int64_t at_ms = 0; // relative to the start of the run
    std::string target;
    bool value = false;
};

// count commands, every_ms apart from start_ms, alternating led1/led2 and
// toggling each target's value.
struct PeriodicCommands {
    std::int64_t start_ms = 0;
    std::int64_t every_ms = 0;
    std::uint64_t count = 0;
};

// All times inside are relative to the start of the run.
struct ExperimentConfig {
    std::string name = "experiment";
    std::uint64_t seed = 1;
    std::int64_t duration_ms = 600'000;
    std::int64_t drain_ms = 60'000; // no new samples or commands; lets buffers empty
    std::int64_t start_epoch_ms = 1'705'314'601'000; // one second after the seed document's last_update

    LinkModel uplink;      // agent -> server
    LinkModel downlink;    // server -> agent (reliable)
    LinkModel client_link; // both directions for every other client (reliable)

    SensorModel sensors;
    agent::AgentConfig agent;

    unsigned subscribers = 0;  // sessions watching "/"
    double load_rate_hz = 0;   // extra writes to /sensors/temperature
    std::vector<ScriptedCommand> commands;
    PeriodicCommands periodic;

    std::int64_t heartbeat_timeout_ms = 15'000;
    std::int64_t client_ping_ms = 5'000;
    bool trace = false;
};

struct ConfigInvalid {
    std::string reason;
};

Result<ExperimentConfig, ConfigInvalid> experiment_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ExperimentConfig& c);
// Throws on unreadable files or invalid content.
ExperimentConfig load_experiment_config(const std::string& file);

struct CommandRecord {
    std::int64_t issued_ms = 0;
    std::string target;
    bool value = false;
    std::optional<std::uint64_t> revision; // from the server's ACK
    bool rejected_by_server = false;
    std::optional<agent::CommandOutcome> outcome;
    std::optional<std::int64_t> applied_ms;
};

struct LatencyStats {
    std::size_t count = 0;
    double mean_ms = 0;
    double p50_ms = 0;
    double p95_ms = 0;
    double max_ms = 0;
    std::vector<std::int64_t> samples; // sorted
};

// Nearest-rank percentile of a sorted, non-empty sample.
std::int64_t nearest_rank(const std::vector<std::int64_t>& sorted, double p);

// Latency = actuator applied time - issue time, over accepted commands only.
LatencyStats measure_control_latency(const std::vector<CommandRecord>& commands);

struct RecoveryRecord {
    Window window; // relative
    std::optional<std::int64_t> recovery_time_ms; // from window start
    std::optional<std::int64_t> after_end_ms;     // from window end
};

struct MetricsReport {
    std::string experiment;
    std::uint64_t seed = 0;
    std::int64_t duration_ms = 0;

    std::uint64_t frames_produced = 0;
    std::uint64_t frames_delivered = 0;
    std::uint64_t frames_first_pass = 0;
    std::uint64_t frames_buffered = 0;
    std::uint64_t frames_dropped = 0;
    std::uint64_t frames_pending = 0;
    double first_pass_success_rate = 0;
    double eventual_delivery_rate = 0;
    double sensor_update_hz = 0;

    std::uint64_t commands_issued = 0;
    std::uint64_t commands_accepted = 0;
    std::uint64_t commands_rejected_stale = 0;
    std::uint64_t commands_rejected_replay = 0;
    std::uint64_t commands_rejected_by_server = 0;
    std::uint64_t commands_unresolved = 0;
    LatencyStats control_latency;

    std::vector<RecoveryRecord> recovery;

    unsigned subscribers = 0;
    std::uint64_t subscriber_events = 0;
    std::uint64_t event_loss_count = 0;
    std::uint64_t event_order_violations = 0;
    std::uint64_t event_duplicates = 0;

    std::uint64_t commits = 0;
    std::uint64_t safe_mode_entries = 0;
    std::uint64_t resets = 0;
    std::uint64_t reconnects = 0;
    std::uint64_t link_failures = 0;
    std::uint64_t conservation_checks = 0;
    std::uint64_t conservation_violations = 0;

    std::vector<CommandRecord> commands; // detail, not serialized
};

nlohmann::ordered_json to_json(const MetricsReport& r);
// Human-readable summary: metric, target, measured, unit.
std::string render_table(const MetricsReport& r);

struct ExperimentOutput {
    MetricsReport report;
    std::string trace; // JSONL, empty unless config.trace
};

Result<ExperimentOutput, ConfigInvalid> run_experiment(const ExperimentConfig& config);

} // namespace rtsync::sim
