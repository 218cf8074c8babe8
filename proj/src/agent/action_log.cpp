#include "rtsync/agent/action_log.hpp"

#include <json.hpp>

#include <ostream>

namespace rtsync::agent {

const char* to_string(ActionKind k) {
    switch (k) {
    case ActionKind::Tx:
        return "tx";
    case ActionKind::Cmd:
        return "cmd";
    case ActionKind::Recovery:
        return "recovery";
    case ActionKind::Mode:
        return "mode";
    }
    return "?";
}

std::string encode_action(const ActionRecord& r) {
    nlohmann::json j;
    j["time_ms"] = r.time_ms;
    j["kind"] = to_string(r.kind);
    j["detail"] = r.detail;
    return j.dump();
}

void ActionLog::append(std::int64_t time_ms, ActionKind kind, std::string detail) {
    ActionRecord r{time_ms, kind, std::move(detail)};
    if (sink_) {
        *sink_ << encode_action(r) << '\n';
    }
    if (retain_) {
        records_.push_back(std::move(r));
    }
}

} // namespace rtsync::agent
