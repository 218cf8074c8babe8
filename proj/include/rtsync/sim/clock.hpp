#pragma once

#include <cstdint>
#include <functional>
#include <queue>
#include <vector>

namespace rtsync::sim {

// Virtual time. Events fire in (time, insertion order); scheduling into the
// past is clamped to now so time never runs backwards.
class SimClock {
public:
    using Action = std::function<void()>;

    explicit SimClock(std::int64_t start_ms = 0) : now_(start_ms) {}

    std::int64_t now() const noexcept { return now_; }

    void schedule(std::int64_t at_ms, Action action) {
        queue_.push(Entry{at_ms < now_ ? now_ : at_ms, seq_++, std::move(action)});
    }

    bool empty() const noexcept { return queue_.empty(); }
    std::size_t pending() const noexcept { return queue_.size(); }
    std::uint64_t fired() const noexcept { return fired_; }

    // Runs one event; false when nothing is queued.
    bool run_next() {
        if (queue_.empty()) {
            return false;
        }
        // top() is const; the entry is popped right away, so moving from it is fine.
        Entry e = std::move(const_cast<Entry&>(queue_.top()));
        queue_.pop();
        now_ = e.at;
        ++fired_;
        e.action();
        return true;
    }

    // Runs every event scheduled at or before t, then advances to t.
    void run_until(std::int64_t t_ms) {
        while (!queue_.empty() && queue_.top().at <= t_ms) {
            run_next();
        }
        if (t_ms > now_) {
            now_ = t_ms;
        }
    }

private:
    struct Entry {
        std::int64_t at;
        std::uint64_t seq;
        Action action;
    };
    struct Later {
        bool operator()(const Entry& a, const Entry& b) const noexcept {
            return a.at != b.at ? a.at > b.at : a.seq > b.seq;
        }
    };

    std::int64_t now_;
    std::uint64_t seq_ = 0;
    std::uint64_t fired_ = 0;
    std::priority_queue<Entry, std::vector<Entry>, Later> queue_;
};

} // namespace rtsync::sim
