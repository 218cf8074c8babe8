#pragma once

#include <cstdint>
#include <vector>

namespace rtsync::agent {

enum class Mode {
    Normal,
    SafeMode,
};

const char* to_string(Mode m);

enum class RecoveryAction {
    Reconnect,          // link down
    Resync,             // no word from the server for too long
    RecalibrateSensors, // filtered readings out of range
    FlushBuffer,        // uplink buffer close to capacity
    EnterSafeMode,
    ScheduleReset,
};

const char* to_string(RecoveryAction a);

struct HealthState {
    bool link_ok = true;
    bool sync_ok = true;
    bool sensor_ok = true;
    bool buffer_ok = true;
    unsigned consecutive_failures = 0;
    Mode mode = Mode::Normal;
    std::int64_t last_successful_tx_ms = 0;

    friend bool operator==(const HealthState&, const HealthState&) = default;
};

struct HealthObservation {
    bool link_ok = true;
    bool sync_ok = true;
    bool sensor_ok = true;
    bool buffer_ok = true;
};

// Periodic check: any breach is one recovery attempt; a clean check clears
// the count. The check after `threshold` unsuccessful attempts switches to
// safe mode and asks for a full reset.
class HealthMonitor {
public:
    explicit HealthMonitor(unsigned threshold = 3) : threshold_(threshold) {}

    std::vector<RecoveryAction> check(const HealthObservation& obs);

    const HealthState& state() const noexcept { return state_; }
    HealthState& state() noexcept { return state_; }
    void reset() {
        const auto last_tx = state_.last_successful_tx_ms;
        state_ = HealthState{};
        state_.last_successful_tx_ms = last_tx;
    }

private:
    unsigned threshold_;
    HealthState state_;
};

} // namespace rtsync::agent
