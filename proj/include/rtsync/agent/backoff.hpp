#pragma once

#include <algorithm>
#include <cstdint>

namespace rtsync::agent {

// Deterministic exponential backoff (no jitter): base * factor^n, capped.
struct BackoffPolicy {
    std::int64_t base_ms = 500;
    std::int64_t factor = 2;
    std::int64_t cap_ms = 8'000;

    // Delay before retry number `n` (0-based).
    std::int64_t delay(unsigned n) const noexcept {
        std::int64_t d = base_ms;
        for (unsigned i = 0; i < n && d < cap_ms; ++i) {
            d *= factor;
        }
        return std::min(d, cap_ms);
    }
};

} // namespace rtsync::agent
