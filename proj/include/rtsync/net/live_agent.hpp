#pragma once

#include "rtsync/agent/agent.hpp"
#include "rtsync/net/client.hpp"

#include <atomic>
#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <ostream>
#include <vector>

namespace rtsync::net {

// agent::Transport over a real connection. Connects lazily on the first send
// after construction or reset(); any write failure drops the connection.
class LiveTransport : public agent::Transport {
public:
    explicit LiveTransport(Endpoint ep, std::chrono::milliseconds connect_timeout = std::chrono::milliseconds(1000))
        : ep_(std::move(ep)), connect_timeout_(connect_timeout) {}

    bool send(const server::WireMessage& msg) override;
    void reset() override;

    // Waits up to `timeout` for one frame, then drains whatever else is ready.
    std::vector<server::WireMessage> poll(std::chrono::milliseconds timeout);
    bool connected() const { return channel_ && channel_->is_open(); }

private:
    Endpoint ep_;
    std::chrono::milliseconds connect_timeout_;
    std::unique_ptr<FrameChannel> channel_;
};

struct LiveAgentOptions {
    std::optional<std::int64_t> duration_ms; // run until stopped when absent
    std::chrono::milliseconds max_poll = std::chrono::milliseconds(200);
};

// Drives an agent in wall-clock time until `stop` is set or the duration
// elapses. Human-readable progress goes to `out` when given.
void run_live_agent(agent::Agent& agent, LiveTransport& transport, const std::atomic<bool>& stop,
                    const LiveAgentOptions& options, std::ostream* out);

} // namespace rtsync::net
