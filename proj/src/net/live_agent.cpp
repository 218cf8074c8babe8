#include "rtsync/net/live_agent.hpp"

#include <algorithm>
#include <thread>

namespace rtsync::net {

namespace {

std::int64_t wall_ms() {
    using namespace std::chrono;
    return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

} // namespace

bool LiveTransport::send(const server::WireMessage& msg) {
    if (!connected()) {
        auto ch = open_channel(ep_, connect_timeout_);
        if (!ch) {
            return false;
        }
        channel_ = std::move(ch).value();
    }
    if (!channel_->write(server::encode(msg))) {
        channel_.reset();
        return false;
    }
    return true;
}

void LiveTransport::reset() {
    if (channel_) {
        channel_->close();
        channel_.reset();
    }
}

std::vector<server::WireMessage> LiveTransport::poll(std::chrono::milliseconds timeout) {
    std::vector<server::WireMessage> out;
    if (!connected()) {
        return out;
    }
    auto wait = timeout;
    while (true) {
        auto frame = channel_->read(wait);
        if (!frame) {
            channel_.reset();
            break;
        }
        if (!*frame) {
            break;
        }
        // Undecodable frames are dropped; the request they answer times out.
        if (auto msg = server::decode(**frame)) {
            out.push_back(std::move(msg).value());
        }
        wait = std::chrono::milliseconds(1);
    }
    return out;
}

void run_live_agent(agent::Agent& agent, LiveTransport& transport, const std::atomic<bool>& stop,
                    const LiveAgentOptions& options, std::ostream* out) {
    const auto start = wall_ms();
    agent.start(start);
    auto report = [out](const std::vector<agent::Effect>& effects) {
        if (!out) {
            return;
        }
        for (const auto& e : effects) {
            if (const auto* a = std::get_if<agent::ActuatorEffect>(&e)) {
                *out << a->target << " -> " << (a->value ? "on" : "off") << " (revision " << a->revision << ")\n";
            } else if (const auto* l = std::get_if<agent::LogEffect>(&e)) {
                if (l->record.kind != agent::ActionKind::Tx) {
                    *out << agent::encode_action(l->record) << '\n';
                }
            }
        }
        out->flush();
    };
    report(agent.step(start));
    while (!stop) {
        auto now = wall_ms();
        if (options.duration_ms && now - start >= *options.duration_ms) {
            break;
        }
        auto wait = options.max_poll;
        if (const auto next = agent.next_wakeup()) {
            wait = std::clamp(std::chrono::milliseconds(*next - now), std::chrono::milliseconds(1), wait);
        }
        const auto inbound = transport.poll(wait);
        now = wall_ms();
        for (auto& msg : inbound) {
            agent.receive(std::move(msg), now);
        }
        if (!transport.connected() && inbound.empty()) {
            // Nothing to read from: sleep out the wait instead of spinning.
            std::this_thread::sleep_for(wait);
            now = wall_ms();
        }
        report(agent.step(now));
    }
}

} // namespace rtsync::net
