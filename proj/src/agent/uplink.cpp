#include "rtsync/agent/uplink.hpp"

#include <algorithm>

namespace rtsync::agent {

void Uplink::push(const ProcessedFrame& frame, std::int64_t now_ms) {
    if (queue_.size() >= config_.capacity) {
        queue_.pop_front();
        ++counters_.dropped;
    }
    PendingFrame f;
    f.seq = next_seq_++;
    f.frame = frame;
    f.ready_at_ms = now_ms;
    queue_.push_back(std::move(f));
    ++counters_.produced;
}

std::size_t Uplink::in_flight() const noexcept {
    return static_cast<std::size_t>(std::count_if(queue_.begin(), queue_.end(), [](const PendingFrame& f) {
        return f.state == FrameState::InFlight;
    }));
}

bool Uplink::fail_attempt(PendingFrame& f, std::int64_t now_ms) {
    ++counters_.failed_attempts;
    ++f.attempts;
    if (f.attempts >= config_.max_attempts) {
        f.state = FrameState::Buffered;
        f.ready_at_ms = now_ms + config_.retry_after_ms;
        if (!f.ever_buffered) {
            f.ever_buffered = true;
            ++counters_.buffered;
        }
        return true;
    }
    f.state = FrameState::Waiting;
    f.ready_at_ms = now_ms + config_.backoff.delay(f.attempts - 1);
    return false;
}

PumpResult Uplink::pump(std::int64_t now_ms, bool online, const FrameSender& send) {
    PumpResult result;

    // Unanswered attempts count as failures once the ack timeout passes.
    for (auto& f : queue_) {
        if (f.state == FrameState::InFlight && now_ms - f.sent_at_ms >= config_.ack_timeout_ms) {
            if (fail_attempt(f, now_ms)) {
                ++result.newly_buffered;
                result.link_failure = true;
            }
        }
    }

    if (!online) {
        if (queue_.empty() || queue_.front().state != FrameState::Buffered || queue_.front().ready_at_ms > now_ms) {
            return result;
        }
    }

    std::size_t flying = in_flight();
    for (auto& f : queue_) {
        if (f.state == FrameState::InFlight) {
            continue;
        }
        if (flying >= config_.max_in_flight || f.ready_at_ms > now_ms) {
            break;
        }
        if (f.state == FrameState::Buffered) {
            f.attempts = 0; // slow retry starts a fresh round
        }
        ++counters_.attempts;
        const auto id = send(f.frame);
        if (!id) {
            if (!online) {
                ++counters_.failed_attempts;
                f.state = FrameState::Buffered;
                f.ready_at_ms = now_ms + config_.retry_after_ms;
                break;
            }
            if (fail_attempt(f, now_ms)) {
                ++result.newly_buffered;
                result.link_failure = true;
            }
            break;
        }
        f.state = FrameState::InFlight;
        f.sent_at_ms = now_ms;
        f.msg_ids.push_back(*id);
        ++result.sent;
        ++flying;
        if (!online) {
            break; // the slow retry probes with one frame only
        }
    }
    return result;
}

std::deque<PendingFrame>::iterator Uplink::find_msg(std::uint64_t msg_id) {
    return std::find_if(queue_.begin(), queue_.end(), [msg_id](const PendingFrame& f) {
        return std::find(f.msg_ids.begin(), f.msg_ids.end(), msg_id) != f.msg_ids.end();
    });
}

bool Uplink::on_ack(std::uint64_t msg_id) {
    const auto it = find_msg(msg_id);
    if (it == queue_.end()) {
        return false;
    }
    ++counters_.delivered;
    if (!it->ever_buffered) {
        ++counters_.delivered_first_pass;
    }
    last_delivered_ = it->frame;
    queue_.erase(it);
    return true;
}

bool Uplink::on_rejected(std::uint64_t msg_id) {
    const auto it = find_msg(msg_id);
    if (it == queue_.end()) {
        return false;
    }
    ++counters_.rejected;
    ++counters_.dropped;
    queue_.erase(it);
    return true;
}

bool Uplink::on_retryable(std::uint64_t msg_id, std::int64_t now_ms) {
    const auto it = find_msg(msg_id);
    if (it == queue_.end()) {
        return false;
    }
    if (it->state == FrameState::InFlight) {
        it->state = FrameState::Waiting;
        it->ready_at_ms = now_ms;
    }
    return true;
}

void Uplink::resume(std::int64_t now_ms) {
    for (auto& f : queue_) {
        if (f.state == FrameState::Buffered) {
            f.state = FrameState::Waiting;
            f.attempts = 0;
            f.ready_at_ms = now_ms;
        }
    }
}

void Uplink::requeue_in_flight(std::int64_t now_ms) {
    for (auto& f : queue_) {
        if (f.state == FrameState::InFlight) {
            f.state = FrameState::Waiting;
            f.ready_at_ms = now_ms;
        }
    }
}

std::optional<std::int64_t> Uplink::next_wakeup(bool online) const {
    std::optional<std::int64_t> best;
    auto consider = [&best](std::int64_t t) {
        if (!best || t < *best) {
            best = t;
        }
    };
    bool head_seen = in_flight() >= config_.max_in_flight; // a slot must free up first
    for (const auto& f : queue_) {
        if (f.state == FrameState::InFlight) {
            consider(f.sent_at_ms + config_.ack_timeout_ms);
        } else if (!head_seen) {
            head_seen = true;
            if (online || f.state == FrameState::Buffered) {
                consider(f.ready_at_ms);
            }
        }
    }
    return best;
}

} // namespace rtsync::agent
