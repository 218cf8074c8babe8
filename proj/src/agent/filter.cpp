#include "rtsync/agent/filter.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace rtsync::agent {

RangeVerdict validate_ranges(double t, double h, double d) {
    auto in = [](double v, double lo, double hi) { return v >= lo && v <= hi; };
    return RangeVerdict{in(t, ranges::kTemperatureMin, ranges::kTemperatureMax),
                        in(h, ranges::kHumidityMin, ranges::kHumidityMax),
                        in(d, ranges::kDistanceMin, ranges::kDistanceMax)};
}

double median_of(std::span<const double> window) {
    std::vector<double> sorted(window.begin(), window.end());
    const auto mid = sorted.begin() + static_cast<std::ptrdiff_t>(sorted.size() / 2);
    std::nth_element(sorted.begin(), mid, sorted.end());
    return *mid;
}

Result<ProcessedFrame, FilterError> SensorFilter::apply(const SensorFrame& frame) {
    auto& s = state_;
    const bool t_read = std::isfinite(frame.temperature_c);
    const bool h_read = std::isfinite(frame.humidity_pct);
    const bool d_read = std::isfinite(frame.distance_cm);

    if (!s.initialized) {
        if (t_read && h_read) {
            s.t_filtered = frame.temperature_c;
            s.h_filtered = frame.humidity_pct;
            s.initialized = true;
        }
    } else {
        if (t_read) {
            s.t_filtered = ema_step(frame.temperature_c, s.t_filtered);
        }
        if (h_read) {
            s.h_filtered = ema_step(frame.humidity_pct, s.h_filtered);
        }
    }

    if (d_read) {
        s.d_buffer.push_back(frame.distance_cm);
        if (s.d_buffer.size() >= kMedianWindow) {
            const std::vector<double> window(s.d_buffer.begin(), s.d_buffer.end());
            s.d_filtered = median_of(window);
            s.d_buffer.pop_front();
        } else {
            s.d_filtered = frame.distance_cm;
        }
    }

    RangeVerdict v = validate_ranges(s.t_filtered, s.h_filtered, s.d_filtered);
    v.temperature = v.temperature && t_read && s.initialized;
    v.humidity = v.humidity && h_read && s.initialized;
    v.distance = v.distance && d_read;

    ProcessedFrame out{s.t_filtered, s.h_filtered, s.d_filtered, frame.sample_time_ms};
    if (!v.all()) {
        // Calibration has no observable effect beyond flagging the sensor and
        // falling back to the last good values.
        s.sensor_ok = false;
        if (!s.last_valid) {
            return fail(FilterError::NoValidReadingYet);
        }
        if (!v.temperature) out.temperature_c = s.last_valid->temperature_c;
        if (!v.humidity) out.humidity_pct = s.last_valid->humidity_pct;
        if (!v.distance) out.distance_cm = s.last_valid->distance_cm;
    } else {
        s.sensor_ok = true;
    }
    s.last_valid = out;
    return out;
}

} // namespace rtsync::agent
