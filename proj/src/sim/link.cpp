#include "rtsync/sim/link.hpp"

#include <algorithm>
#include <stdexcept>

namespace rtsync::sim {

bool Link::partitioned(std::int64_t t) const noexcept {
    return std::any_of(model_.partitions.begin(), model_.partitions.end(),
                       [t](const Window& w) { return w.contains(t); });
}

std::optional<std::int64_t> Link::transmit(std::int64_t now_ms) {
    ++attempts_;
    if (partitioned(now_ms) || rng_.bernoulli(model_.drop_prob)) {
        ++lost_;
        return std::nullopt;
    }
    std::int64_t delay = model_.delay_ms;
    if (model_.spread_ms > 0) {
        delay += rng_.uniform_int(-model_.spread_ms, model_.spread_ms);
    }
    const auto at = std::max(now_ms + std::max<std::int64_t>(delay, 0), last_delivery_);
    last_delivery_ = at;
    return at;
}

LinkModel link_model_from_json(const nlohmann::json& j) {
    LinkModel m;
    if (j.is_null()) {
        return m;
    }
    if (!j.is_object()) {
        throw std::invalid_argument("link model must be an object");
    }
    for (const auto& [key, _] : j.items()) {
        if (key != "delay_ms" && key != "spread_ms" && key != "drop_prob" && key != "partitions" &&
            key != "retransmit_ms") {
            throw std::invalid_argument("unknown link model key: " + key);
        }
    }
    m.delay_ms = j.value("delay_ms", m.delay_ms);
    m.spread_ms = j.value("spread_ms", m.spread_ms);
    m.drop_prob = j.value("drop_prob", m.drop_prob);
    m.retransmit_ms = j.value("retransmit_ms", m.retransmit_ms);
    if (const auto it = j.find("partitions"); it != j.end()) {
        for (const auto& w : *it) {
            m.partitions.push_back(Window{w.at(0).get<std::int64_t>(), w.at(1).get<std::int64_t>()});
        }
    }
    if (m.delay_ms < 0 || m.spread_ms < 0 || m.spread_ms > m.delay_ms || m.drop_prob < 0 || m.drop_prob > 1 ||
        m.retransmit_ms <= 0) {
        throw std::invalid_argument("link model: need 0 <= spread <= delay, drop_prob in [0,1], retransmit > 0");
    }
    for (const auto& w : m.partitions) {
        if (w.end_ms < w.start_ms) {
            throw std::invalid_argument("link model: partition ends before it starts");
        }
    }
    return m;
}

nlohmann::json to_json(const LinkModel& m) {
    nlohmann::json parts = nlohmann::json::array();
    for (const auto& w : m.partitions) {
        parts.push_back({w.start_ms, w.end_ms});
    }
    return {{"delay_ms", m.delay_ms},
            {"spread_ms", m.spread_ms},
            {"drop_prob", m.drop_prob},
            {"partitions", parts},
            {"retransmit_ms", m.retransmit_ms}};
}

} // namespace rtsync::sim
