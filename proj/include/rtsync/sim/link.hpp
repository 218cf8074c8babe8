#pragma once

#include "rtsync/sim/clock.hpp"
#include "rtsync/sim/rng.hpp"

#include <json.hpp>

#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

namespace rtsync::sim {

// Half-open interval of simulated time.
struct Window {
    std::int64_t start_ms = 0;
    std::int64_t end_ms = 0;

    bool contains(std::int64_t t) const noexcept { return t >= start_ms && t < end_ms; }
    friend bool operator==(const Window&, const Window&) = default;
};

struct LinkModel {
    std::int64_t delay_ms = 0;
    std::int64_t spread_ms = 0; // delay drawn uniformly from [delay - spread, delay + spread]
    double drop_prob = 0;       // per transmission attempt
    std::vector<Window> partitions;
    std::int64_t retransmit_ms = 200; // reliable channels only

    friend bool operator==(const LinkModel&, const LinkModel&) = default;
};

LinkModel link_model_from_json(const nlohmann::json& j);
nlohmann::json to_json(const LinkModel& m);

// One direction of a lossy link. Deliveries never overtake each other.
class Link {
public:
    Link(LinkModel model, Rng rng) : model_(std::move(model)), rng_(std::move(rng)) {}

    bool partitioned(std::int64_t t) const noexcept;
    // Delivery time, or nullopt if this attempt is lost.
    std::optional<std::int64_t> transmit(std::int64_t now_ms);

    const LinkModel& model() const noexcept { return model_; }
    std::uint64_t attempts() const noexcept { return attempts_; }
    std::uint64_t lost() const noexcept { return lost_; }

private:
    LinkModel model_;
    Rng rng_;
    std::int64_t last_delivery_ = std::numeric_limits<std::int64_t>::min();
    std::uint64_t attempts_ = 0;
    std::uint64_t lost_ = 0;
};

// In-order, loss-free delivery over a lossy Link: a lost attempt is retried
// after retransmit_ms and blocks everything queued behind it.
template <typename Msg>
class ReliableChannel {
public:
    using Sink = std::function<void(Msg, std::int64_t deliver_ms)>;
    // Called for every attempt: send time, delivery time or nullopt.
    using Observer = std::function<void(const Msg&, std::int64_t, std::optional<std::int64_t>)>;

    ReliableChannel(Link link, SimClock& clock, Sink sink) : link_(std::move(link)), clock_(clock), sink_(std::move(sink)) {}

    void set_observer(Observer obs) { observer_ = std::move(obs); }

    void send(Msg msg) {
        backlog_.push_back(std::move(msg));
        if (!retry_armed_) {
            pump();
        }
    }

    std::size_t backlog() const noexcept { return backlog_.size(); }
    const Link& link() const noexcept { return link_; }

private:
    void pump() {
        retry_armed_ = false;
        while (!backlog_.empty()) {
            const auto now = clock_.now();
            const auto at = link_.transmit(now);
            if (observer_) {
                observer_(backlog_.front(), now, at);
            }
            if (!at) {
                retry_armed_ = true;
                clock_.schedule(now + link_.model().retransmit_ms, [this] { pump(); });
                return;
            }
            clock_.schedule(*at, [this, m = std::move(backlog_.front()), t = *at]() mutable { sink_(std::move(m), t); });
            backlog_.pop_front();
        }
    }

    Link link_;
    SimClock& clock_;
    Sink sink_;
    Observer observer_;
    std::deque<Msg> backlog_;
    bool retry_armed_ = false;
};

} // namespace rtsync::sim
