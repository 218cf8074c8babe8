#pragma once

#include "rtsync/agent/action_log.hpp"
#include "rtsync/agent/commands.hpp"
#include "rtsync/agent/config.hpp"
#include "rtsync/agent/filter.hpp"
#include "rtsync/agent/health.hpp"
#include "rtsync/agent/uplink.hpp"
#include "rtsync/server/wire.hpp"

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace rtsync::agent {

using server::WireMessage;

// Outbound side of the connection. send() returning false means the message
// was certainly not delivered; true only means it left the device.
class Transport {
public:
    virtual ~Transport() = default;
    virtual bool send(const WireMessage& msg) = 0;
    // Tear down and re-establish the underlying connection on next send.
    virtual void reset() = 0;
};

class SensorSource {
public:
    virtual ~SensorSource() = default;
    virtual SensorFrame read(std::int64_t now_ms) = 0;
};

class Actuator {
public:
    virtual ~Actuator() = default;
    virtual void set(std::string_view target, bool on) = 0;
};

enum class LinkState {
    Connecting,   // waiting to (re)send AUTH
    Online,
    Reconnecting, // probing with PINGs on the backoff schedule
};

const char* to_string(LinkState s);

struct SentEffect {
    WireMessage msg;
    bool accepted = false; // transport verdict
    friend bool operator==(const SentEffect&, const SentEffect&) = default;
};
struct ActuatorEffect {
    std::string target;
    bool value = false;
    std::uint64_t revision = 0;
    friend bool operator==(const ActuatorEffect&, const ActuatorEffect&) = default;
};
struct LogEffect {
    ActionRecord record;
    friend bool operator==(const LogEffect&, const LogEffect&) = default;
};
using Effect = std::variant<SentEffect, ActuatorEffect, LogEffect>;

struct AgentCounters {
    std::uint64_t samples = 0;
    std::uint64_t skipped_samples = 0; // no valid reading yet
    std::uint64_t commands_accepted = 0;
    std::uint64_t commands_stale = 0;
    std::uint64_t commands_replayed = 0;
    std::uint64_t link_failures = 0;
    std::uint64_t reconnects = 0;
    std::uint64_t safe_mode_entries = 0;
    std::uint64_t resets = 0;
    std::uint64_t status_updates = 0;
};

// UPDATE batch carrying one processed frame.
server::Update frame_update(const ProcessedFrame& f);

// The device state machine. Inputs are queued with receive() and consumed by
// step(now); step is a pure function of state, queued inputs, injected
// sensor readings and now, so identical scripts produce identical effects.
class Agent {
public:
    using CommandObserver = std::function<void(const CommandEnvelope&, CommandOutcome, std::int64_t now_ms)>;

    Agent(AgentConfig config, Transport& transport, SensorSource& sensors, Actuator* actuator = nullptr);

    // Arms every schedule relative to now_ms. Must be called once before step.
    void start(std::int64_t now_ms);

    void receive(WireMessage msg, std::int64_t local_time_ms);
    std::vector<Effect> step(std::int64_t now_ms);
    // Earliest time at which scheduled work is due. Received messages are not
    // included: whoever calls receive() should also step.
    std::optional<std::int64_t> next_wakeup() const;

    // Individually callable pieces of step.
    Result<ProcessedFrame, FilterError> acquire(std::int64_t now_ms);
    std::optional<server::Update> periodic_status_update(std::int64_t now_ms);
    std::vector<RecoveryAction> monitor_health(std::int64_t now_ms);
    Result<CommandOutcome, CommandError> handle_command(const CommandEnvelope& cmd, std::int64_t now_ms);
    // Subscription snapshot: the tree's current LED state, applied without the age limit.
    Result<CommandOutcome, CommandError> sync_command(const CommandEnvelope& cmd, std::int64_t now_ms);

    std::int64_t server_time_estimate(std::int64_t local_ms) const noexcept { return local_ms + clock_offset_ms_; }

    LinkState link_state() const noexcept { return link_; }
    const Uplink& uplink() const noexcept { return uplink_; }
    const HealthState& health() const noexcept { return health_.state(); }
    const FilterState& filter() const noexcept { return filter_.state(); }
    const CommandGate& commands() const noexcept { return gate_; }
    const AgentCounters& counters() const noexcept { return counters_; }
    const ActionLog& log() const noexcept { return log_; }
    ActionLog& log() noexcept { return log_; }
    const AgentConfig& config() const noexcept { return config_; }
    const std::optional<ProcessedFrame>& latest_frame() const noexcept { return latest_; }
    // Sampling can be paused, e.g. to let the uplink drain at the end of a run.
    void set_sampling(bool on) noexcept { sampling_ = on; }
    void set_command_observer(CommandObserver obs) { command_observer_ = std::move(obs); }
    // Delays between successive reconnect probes so far in the current outage.
    const std::vector<std::int64_t>& probe_delays() const noexcept { return probe_delays_; }

private:
    enum class Purpose { Auth, Subscribe, Status, CommandAck, Heartbeat, Probe };
    struct PendingRequest {
        Purpose purpose;
        std::int64_t sent_local_ms;
    };

    bool send(server::Body body, Purpose purpose, std::int64_t now_ms);
    std::optional<std::uint64_t> send_frame(const ProcessedFrame& f, std::int64_t now_ms);
    void note(std::int64_t now_ms, ActionKind kind, std::string detail);
    Result<CommandOutcome, CommandError> apply_command(const CommandEnvelope& cmd, std::int64_t now_ms, bool state_sync);

    void process(const WireMessage& msg, std::int64_t recv_ms, std::int64_t now_ms);
    void on_ack(const server::Ack& ack, std::int64_t now_ms);
    void on_err(const server::Err& err, std::int64_t now_ms);
    void on_pong(const server::Pong& pong, std::int64_t recv_ms, std::int64_t now_ms);
    void on_event(const server::Event& ev, std::int64_t now_ms);

    void begin_connect(std::int64_t now_ms);
    void go_online(std::int64_t now_ms);
    void link_down(std::int64_t now_ms, const char* why);
    void full_reset(std::int64_t now_ms);
    void run_connection(std::int64_t now_ms);
    void ensure_subscriptions(std::int64_t now_ms);
    void ensure_acks(std::int64_t now_ms);
    void run_heartbeat(std::int64_t now_ms);
    void run_uplink(std::int64_t now_ms);

    AgentConfig config_;
    Transport& transport_;
    SensorSource& sensors_;
    Actuator* actuator_;

    SensorFilter filter_;
    Uplink uplink_;
    CommandGate gate_;
    HealthMonitor health_;
    ActionLog log_;
    AgentCounters counters_;
    std::optional<ProcessedFrame> latest_;

    std::deque<std::pair<WireMessage, std::int64_t>> inbox_;
    std::vector<Effect>* effects_ = nullptr;

    LinkState link_ = LinkState::Connecting;
    std::uint64_t next_msg_id_ = 1;
    std::map<std::uint64_t, PendingRequest> pending_;

    std::optional<std::int64_t> connect_at_;  // next AUTH attempt
    unsigned connect_attempts_ = 0;
    std::optional<std::uint64_t> auth_msg_;

    // Command paths; re-sent until acknowledged in the current session.
    struct SubscriptionState {
        std::string path;
        bool active = false;
        std::optional<std::uint64_t> msg;
        std::int64_t retry_at_ms = 0;
        std::optional<std::uint64_t> sub_id;
        bool awaiting_snapshot = false; // the next EVENT for sub_id is the current state

        static SubscriptionState fresh(std::string p) {
            return {std::move(p), false, std::nullopt, 0, std::nullopt, false};
        }
    };
    std::vector<SubscriptionState> subscriptions_;

    // Latest acknowledgment per target; re-sent until the server confirms it.
    struct PendingAck {
        std::uint64_t revision = 0;
        std::int64_t applied_at_ms = 0; // server time
        std::optional<std::uint64_t> msg;
        std::int64_t retry_at_ms = 0;
    };
    std::map<std::string, PendingAck, std::less<>> acks_;

    std::int64_t next_probe_ms_ = 0;
    unsigned probe_attempts_ = 0;
    std::int64_t link_down_since_ms_ = 0;
    std::vector<std::int64_t> probe_delays_;

    std::int64_t next_heartbeat_ms_ = 0;
    unsigned heartbeat_failures_ = 0;
    std::optional<std::uint64_t> heartbeat_msg_;

    std::int64_t next_sample_ms_ = 0;
    std::int64_t next_status_ms_ = 0;
    std::int64_t next_health_ms_ = 0;
    std::optional<std::int64_t> reset_at_ms_;
    std::int64_t last_server_contact_ms_ = 0;

    std::int64_t clock_offset_ms_ = 0;
    std::optional<std::int64_t> best_rtt_ms_;
    bool started_ = false;
    bool sampling_ = true;
    CommandObserver command_observer_;
};

} // namespace rtsync::agent
