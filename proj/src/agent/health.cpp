#include "rtsync/agent/health.hpp"

namespace rtsync::agent {

const char* to_string(Mode m) {
    return m == Mode::Normal ? "normal" : "safe";
}

const char* to_string(RecoveryAction a) {
    switch (a) {
    case RecoveryAction::Reconnect:
        return "reconnect";
    case RecoveryAction::Resync:
        return "resync";
    case RecoveryAction::RecalibrateSensors:
        return "recalibrate";
    case RecoveryAction::FlushBuffer:
        return "flush_buffer";
    case RecoveryAction::EnterSafeMode:
        return "enter_safe_mode";
    case RecoveryAction::ScheduleReset:
        return "schedule_reset";
    }
    return "?";
}

std::vector<RecoveryAction> HealthMonitor::check(const HealthObservation& obs) {
    state_.link_ok = obs.link_ok;
    state_.sync_ok = obs.sync_ok;
    state_.sensor_ok = obs.sensor_ok;
    state_.buffer_ok = obs.buffer_ok;

    std::vector<RecoveryAction> actions;
    if (obs.link_ok && obs.sync_ok && obs.sensor_ok && obs.buffer_ok) {
        state_.consecutive_failures = 0;
        return actions;
    }
    if (state_.mode == Mode::SafeMode) {
        return actions; // reset already pending
    }
    if (state_.consecutive_failures >= threshold_) {
        state_.mode = Mode::SafeMode;
        actions.push_back(RecoveryAction::EnterSafeMode);
        actions.push_back(RecoveryAction::ScheduleReset);
        return actions;
    }
    ++state_.consecutive_failures;
    if (!obs.link_ok) {
        actions.push_back(RecoveryAction::Reconnect);
    }
    if (!obs.sync_ok) {
        actions.push_back(RecoveryAction::Resync);
    }
    if (!obs.sensor_ok) {
        actions.push_back(RecoveryAction::RecalibrateSensors);
    }
    if (!obs.buffer_ok) {
        actions.push_back(RecoveryAction::FlushBuffer);
    }
    return actions;
}

} // namespace rtsync::agent
