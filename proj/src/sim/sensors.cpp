#include "rtsync/sim/sensors.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace rtsync::sim {

namespace {

double channel_value(const ChannelModel& c, std::int64_t t_ms, Rng& rng, double& walk) {
    double v = c.base;
    switch (c.kind) {
    case SignalKind::Constant:
        break;
    case SignalKind::Sinusoid:
        v += c.amplitude * std::sin(2.0 * std::numbers::pi * static_cast<double>(t_ms) / c.period_ms);
        break;
    case SignalKind::RandomWalk:
        walk += c.step * (2.0 * rng.uniform01() - 1.0);
        v += walk;
        break;
    }
    if (c.noise > 0) {
        v += c.noise * rng.normal();
    }
    return v;
}

const char* kind_text(SignalKind k) {
    switch (k) {
    case SignalKind::Constant:
        return "constant";
    case SignalKind::Sinusoid:
        return "sinusoid";
    case SignalKind::RandomWalk:
        return "random_walk";
    }
    return "?";
}

ChannelModel channel_from_json(const nlohmann::json& j, ChannelModel c) {
    if (j.is_number()) {
        c.kind = SignalKind::Constant;
        c.base = j.get<double>();
        return c;
    }
    const auto kind = j.value("kind", std::string(kind_text(c.kind)));
    if (kind == "constant") {
        c.kind = SignalKind::Constant;
    } else if (kind == "sinusoid") {
        c.kind = SignalKind::Sinusoid;
    } else if (kind == "random_walk") {
        c.kind = SignalKind::RandomWalk;
    } else {
        throw std::invalid_argument("unknown signal kind: " + kind);
    }
    c.base = j.value("base", c.base);
    c.amplitude = j.value("amplitude", c.amplitude);
    c.period_ms = j.value("period_ms", c.period_ms);
    c.step = j.value("step", c.step);
    c.noise = j.value("noise", c.noise);
    if (c.period_ms <= 0 || c.noise < 0 || c.step < 0) {
        throw std::invalid_argument("sensor channel: period must be positive, noise and step non-negative");
    }
    return c;
}

nlohmann::json channel_to_json(const ChannelModel& c) {
    return {{"kind", kind_text(c.kind)}, {"base", c.base},   {"amplitude", c.amplitude},
            {"period_ms", c.period_ms},  {"step", c.step},   {"noise", c.noise}};
}

} // namespace

agent::SensorFrame sample_sensor(const SensorModel& model, std::int64_t t_ms, Rng& rng, WalkState& walk) {
    agent::SensorFrame f;
    f.temperature_c = channel_value(model.temperature, t_ms, rng, walk.temperature);
    f.humidity_pct = channel_value(model.humidity, t_ms, rng, walk.humidity);
    f.distance_cm = channel_value(model.distance, t_ms, rng, walk.distance);
    if (rng.bernoulli(model.outlier_prob)) {
        f.distance_cm = model.outlier_lo + (model.outlier_hi - model.outlier_lo) * rng.uniform01();
    }
    f.sample_time_ms = t_ms;
    return f;
}

SensorModel sensor_model_from_json(const nlohmann::json& j) {
    SensorModel m;
    if (j.is_null()) {
        return m;
    }
    if (const auto it = j.find("temperature"); it != j.end()) {
        m.temperature = channel_from_json(*it, m.temperature);
    }
    if (const auto it = j.find("humidity"); it != j.end()) {
        m.humidity = channel_from_json(*it, m.humidity);
    }
    if (const auto it = j.find("distance"); it != j.end()) {
        m.distance = channel_from_json(*it, m.distance);
    }
    m.outlier_prob = j.value("outlier_prob", m.outlier_prob);
    if (const auto it = j.find("outlier_range"); it != j.end()) {
        m.outlier_lo = it->at(0).get<double>();
        m.outlier_hi = it->at(1).get<double>();
    }
    if (m.outlier_prob < 0 || m.outlier_prob > 1 || m.outlier_hi < m.outlier_lo) {
        throw std::invalid_argument("sensor model: outlier_prob in [0,1] and a non-empty outlier range required");
    }
    return m;
}

nlohmann::json to_json(const SensorModel& m) {
    return {{"temperature", channel_to_json(m.temperature)},
            {"humidity", channel_to_json(m.humidity)},
            {"distance", channel_to_json(m.distance)},
            {"outlier_prob", m.outlier_prob},
            {"outlier_range", {m.outlier_lo, m.outlier_hi}}};
}

} // namespace rtsync::sim
