#pragma once

#include "rtsync/agent/backoff.hpp"
#include "rtsync/agent/filter.hpp"

#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <vector>

namespace rtsync::agent {

struct UplinkConfig {
    std::size_t capacity = 1024;
    unsigned max_attempts = 3;
    std::size_t max_in_flight = 4;
    std::int64_t ack_timeout_ms = 5'000;
    std::int64_t retry_after_ms = 30'000;
    BackoffPolicy backoff;
};

enum class FrameState {
    Waiting,  // queued, next attempt at ready_at_ms
    InFlight, // sent, awaiting the server's verdict
    Buffered, // exhausted its in-line attempts; waits for resume() or the slow retry
};

struct PendingFrame {
    std::uint64_t seq = 0;
    ProcessedFrame frame;
    FrameState state = FrameState::Waiting;
    unsigned attempts = 0; // failed attempts in the current round
    std::int64_t ready_at_ms = 0;
    std::int64_t sent_at_ms = 0;
    std::vector<std::uint64_t> msg_ids; // one per attempt, any of them may be acknowledged
    bool ever_buffered = false;
};

struct UplinkCounters {
    std::uint64_t produced = 0;
    std::uint64_t delivered = 0;
    std::uint64_t delivered_first_pass = 0;
    std::uint64_t dropped = 0; // overflow evictions plus server rejections
    std::uint64_t rejected = 0;
    std::uint64_t buffered = 0; // frames that ever entered the buffered state
    std::uint64_t attempts = 0;
    std::uint64_t failed_attempts = 0;

    friend bool operator==(const UplinkCounters&, const UplinkCounters&) = default;
};

// Result of one attempt at putting a frame on the wire: the message id used,
// or nullopt when the transport refused it outright.
using FrameSender = std::function<std::optional<std::uint64_t>(const ProcessedFrame&)>;

struct PumpResult {
    std::size_t sent = 0;
    std::size_t newly_buffered = 0;
    bool link_failure = false;
};

// Store-and-forward queue for sensor frames. Frames leave strictly in
// production order: a frame that is backing off or buffered blocks everything
// behind it, so the server never sees an older sample after a newer one.
// Up to max_in_flight frames may await acknowledgement at once.
class Uplink {
public:
    explicit Uplink(UplinkConfig config = {}) : config_(config) {}

    // Enqueues a new frame; evicts the oldest when full.
    void push(const ProcessedFrame& frame, std::int64_t now_ms);

    // Sends whatever is ready. With online == false only a due slow retry of
    // the head frame may go out.
    PumpResult pump(std::int64_t now_ms, bool online, const FrameSender& send);

    // Server verdicts. Return false for ids that belong to no queued frame.
    bool on_ack(std::uint64_t msg_id);
    bool on_rejected(std::uint64_t msg_id);
    // A reply that is neither success nor a verdict on the content (e.g. the
    // session was lost): the frame goes back to Waiting without burning an attempt.
    bool on_retryable(std::uint64_t msg_id, std::int64_t now_ms);

    // Makes every buffered frame immediately eligible again, with a fresh
    // attempt budget. In-flight frames are left to their ack timeout.
    void resume(std::int64_t now_ms);

    // Forgets outstanding attempts (their session is gone) without charging them.
    void requeue_in_flight(std::int64_t now_ms);

    std::optional<std::int64_t> next_wakeup(bool online) const;

    std::size_t size() const noexcept { return queue_.size(); }
    std::size_t in_flight() const noexcept;
    bool near_full(double fraction) const noexcept {
        return static_cast<double>(queue_.size()) >= fraction * static_cast<double>(config_.capacity);
    }
    const UplinkCounters& counters() const noexcept { return counters_; }
    const std::deque<PendingFrame>& frames() const noexcept { return queue_; }
    const UplinkConfig& config() const noexcept { return config_; }
    const std::optional<ProcessedFrame>& last_delivered() const noexcept { return last_delivered_; }

    // delivered + queued + dropped == produced
    bool conserved() const noexcept {
        return counters_.delivered + queue_.size() + counters_.dropped == counters_.produced;
    }

private:
    std::deque<PendingFrame>::iterator find_msg(std::uint64_t msg_id);
    // Returns true if the frame just became buffered.
    bool fail_attempt(PendingFrame& f, std::int64_t now_ms);

    UplinkConfig config_;
    std::deque<PendingFrame> queue_;
    UplinkCounters counters_;
    std::uint64_t next_seq_ = 1;
    std::optional<ProcessedFrame> last_delivered_;
};

} // namespace rtsync::agent
