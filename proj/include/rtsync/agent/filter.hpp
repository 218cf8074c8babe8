#pragma once

#include "rtsync/result.hpp"

#include <cmath>
#include <cstdint>
#include <deque>
#include <optional>
#include <span>

namespace rtsync::agent {

// Raw readings as delivered by the sensors; may be out of range or NaN.
struct SensorFrame {
    double temperature_c = 0;
    double humidity_pct = 0;
    double distance_cm = 0;
    std::int64_t sample_time_ms = 0;

    friend bool operator==(const SensorFrame&, const SensorFrame&) = default;
};

// Filtered, range-checked triple ready for the uplink.
struct ProcessedFrame {
    double temperature_c = 0;
    double humidity_pct = 0;
    double distance_cm = 0;
    std::int64_t sample_time_ms = 0;

    friend bool operator==(const ProcessedFrame&, const ProcessedFrame&) = default;
};

namespace ranges {
inline constexpr double kTemperatureMin = 0, kTemperatureMax = 50;
inline constexpr double kHumidityMin = 0, kHumidityMax = 100;
inline constexpr double kDistanceMin = 2, kDistanceMax = 400;
} // namespace ranges

struct RangeVerdict {
    bool temperature = false;
    bool humidity = false;
    bool distance = false;

    bool all() const noexcept { return temperature && humidity && distance; }
    friend bool operator==(const RangeVerdict&, const RangeVerdict&) = default;
};

// Inclusive bounds: t in [0,50] C, h in [0,100] %RH, d in [2,400] cm.
RangeVerdict validate_ranges(double t, double h, double d);

inline constexpr std::size_t kMedianWindow = 5;

// 0.7 * raw + 0.3 * previous with a single rounding. Neither weight is exact in
// binary, so 7 * raw + 3 * previous is formed exactly as hi + lo (error-free
// products and sum) and then divided by 10.
inline double ema_step(double raw, double previous) {
    const double a = 7 * raw;
    const double a_err = std::fma(7, raw, -a);
    const double b = 3 * previous;
    const double b_err = std::fma(3, previous, -b);
    const double hi = a + b;
    const double bv = hi - a;
    const double lo = ((a - (hi - bv)) + (b - bv)) + (a_err + b_err);
    const double q = hi / 10;
    const double rem = std::fma(-q, 10, hi); // exact
    return q + (rem + lo) / 10;
}

double median_of(std::span<const double> window);

enum class FilterError {
    NoValidReadingYet,
};

struct FilterState {
    double t_filtered = 0;
    double h_filtered = 0;
    std::deque<double> d_buffer;
    double d_filtered = 0;
    std::optional<ProcessedFrame> last_valid;
    bool initialized = false;
    bool sensor_ok = true;
};

// Temperature and humidity go through the exponential moving average
// (seeded with the first reading); distance goes through a sliding median of
// five, passing raw values through until the window fills. A field that is
// out of range after filtering is replaced by the last valid one.
class SensorFilter {
public:
    Result<ProcessedFrame, FilterError> apply(const SensorFrame& frame);

    const FilterState& state() const noexcept { return state_; }
    void reset() { state_ = FilterState{}; }

private:
    FilterState state_;
};

} // namespace rtsync::agent
