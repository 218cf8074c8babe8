#include "rtsync/agent/commands.hpp"

namespace rtsync::agent {

const char* to_string(CommandOutcome o) {
    switch (o) {
    case CommandOutcome::Accepted:
        return "Accepted";
    case CommandOutcome::RejectedStale:
        return "RejectedStale";
    case CommandOutcome::RejectedReplay:
        return "RejectedReplay";
    }
    return "?";
}

std::uint64_t CommandGate::last_revision(const std::string& target) const {
    const auto it = last_revision_.find(target);
    return it == last_revision_.end() ? 0 : it->second;
}

void CommandGate::power_cycle() {
    set_all(false);
    resync_.clear();
    for (const auto& [target, rev] : last_revision_) {
        resync_.insert(target);
    }
}

Result<CommandOutcome, CommandError> CommandGate::handle(const CommandEnvelope& cmd, std::int64_t now_server_ms) {
    if (!known_target(cmd.target)) {
        return fail(CommandError::UnknownTarget);
    }
    if (now_server_ms - cmd.command_time_ms > window_ms_) {
        return CommandOutcome::RejectedStale;
    }
    return apply(cmd);
}

Result<CommandOutcome, CommandError> CommandGate::sync(const CommandEnvelope& cmd) {
    if (!known_target(cmd.target)) {
        return fail(CommandError::UnknownTarget);
    }
    return apply(cmd);
}

CommandOutcome CommandGate::apply(const CommandEnvelope& cmd) {
    const auto seen = last_revision_.find(cmd.target);
    if (seen != last_revision_.end()) {
        const auto resync = resync_.find(cmd.target);
        if (cmd.revision < seen->second || (cmd.revision == seen->second && resync == resync_.end())) {
            return CommandOutcome::RejectedReplay;
        }
        if (resync != resync_.end()) {
            resync_.erase(resync);
        }
    }
    last_revision_[cmd.target] = cmd.revision;
    (cmd.target == "led1" ? actuators_.current_led1 : actuators_.current_led2) = cmd.value;
    return CommandOutcome::Accepted;
}

} // namespace rtsync::agent
