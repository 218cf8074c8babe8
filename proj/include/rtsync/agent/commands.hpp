#pragma once

#include "rtsync/result.hpp"

#include <cstdint>
#include <map>
#include <set>
#include <string>

namespace rtsync::agent {

struct CommandEnvelope {
    std::string target; // "led1" | "led2"
    bool value = false;
    std::int64_t command_time_ms = 0; // server commit time
    std::uint64_t revision = 0;
};

enum class CommandOutcome {
    Accepted,
    RejectedStale,
    RejectedReplay,
};

enum class CommandError {
    UnknownTarget,
};

const char* to_string(CommandOutcome o);

struct ActuatorState {
    bool current_led1 = false;
    bool current_led2 = false;

    friend bool operator==(const ActuatorState&, const ActuatorState&) = default;
};

inline bool known_target(std::string_view target) {
    return target == "led1" || target == "led2";
}

// Staleness and replay gate in front of the actuators. Ages are measured in
// server time; an age of exactly the window is still fresh.
class CommandGate {
public:
    explicit CommandGate(std::int64_t staleness_window_ms = 5'000) : window_ms_(staleness_window_ms) {}

    Result<CommandOutcome, CommandError> handle(const CommandEnvelope& cmd, std::int64_t now_server_ms);
    // Current state delivered on (re)subscription rather than a command in
    // transit: replay ordering applies, the age limit does not.
    Result<CommandOutcome, CommandError> sync(const CommandEnvelope& cmd);

    const ActuatorState& actuators() const noexcept { return actuators_; }
    void set_all(bool on) noexcept { actuators_ = {on, on}; }
    // Actuators lost their state (device reset): switch them off and let the
    // last accepted revision per target be applied once more, so a re-sync
    // can restore it. Older revisions stay rejected.
    void power_cycle();
    std::uint64_t last_revision(const std::string& target) const;
    void forget_revisions() { last_revision_.clear(); }

private:
    CommandOutcome apply(const CommandEnvelope& cmd);

    std::int64_t window_ms_;
    ActuatorState actuators_;
    std::map<std::string, std::uint64_t, std::less<>> last_revision_;
    std::set<std::string, std::less<>> resync_;
};

} // namespace rtsync::agent
