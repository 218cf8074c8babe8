#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace rtsync::agent {

enum class ActionKind {
    Tx,
    Cmd,
    Recovery,
    Mode,
};

const char* to_string(ActionKind k);

struct ActionRecord {
    std::int64_t time_ms = 0;
    ActionKind kind = ActionKind::Tx;
    std::string detail;

    friend bool operator==(const ActionRecord&, const ActionRecord&) = default;
};

// {"detail":...,"kind":"tx|cmd|recovery|mode","time_ms":...}
std::string encode_action(const ActionRecord& r);

// Append-only local log. Keeps the records in memory and, when given a
// stream, mirrors each one as a JSON line.
class ActionLog {
public:
    ActionLog() = default;
    explicit ActionLog(std::ostream* sink) : sink_(sink) {}

    void append(std::int64_t time_ms, ActionKind kind, std::string detail);
    const std::vector<ActionRecord>& records() const noexcept { return records_; }
    void set_sink(std::ostream* sink) noexcept { sink_ = sink; }
    // Bounded memory for long runs; the sink still sees everything.
    void set_retain(bool retain) noexcept { retain_ = retain; }

private:
    std::vector<ActionRecord> records_;
    std::ostream* sink_ = nullptr;
    bool retain_ = true;
};

} // namespace rtsync::agent
