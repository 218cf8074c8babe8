#pragma once

#include "rtsync/agent/agent.hpp"
#include "rtsync/sim/rng.hpp"

#include <json.hpp>

#include <cstdint>

namespace rtsync::sim {

enum class SignalKind {
    Constant,
    Sinusoid,   // base + amplitude * sin(2 pi t / period)
    RandomWalk, // base + cumulative steps uniform in [-step, step]
};

struct ChannelModel {
    SignalKind kind = SignalKind::Constant;
    double base = 0;
    double amplitude = 0;
    double period_ms = 60'000;
    double step = 0;
    double noise = 0; // standard deviation of additive Gaussian noise
};

struct SensorModel {
    ChannelModel temperature{SignalKind::Constant, 23.2};
    ChannelModel humidity{SignalKind::Constant, 72.2};
    ChannelModel distance{SignalKind::Constant, 17.68};
    double outlier_prob = 0; // distance only
    double outlier_lo = 400;
    double outlier_hi = 450;
};

SensorModel sensor_model_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SensorModel& m);

// Random-walk offsets carried between samples.
struct WalkState {
    double temperature = 0;
    double humidity = 0;
    double distance = 0;
};

agent::SensorFrame sample_sensor(const SensorModel& model, std::int64_t t_ms, Rng& rng, WalkState& walk);

// SensorSource backed by the model; time is measured from `origin_ms`.
class SyntheticSensors : public agent::SensorSource {
public:
    SyntheticSensors(SensorModel model, Rng rng, std::int64_t origin_ms = 0)
        : model_(std::move(model)), rng_(std::move(rng)), origin_ms_(origin_ms) {}

    agent::SensorFrame read(std::int64_t now_ms) override {
        auto f = sample_sensor(model_, now_ms - origin_ms_, rng_, walk_);
        f.sample_time_ms = now_ms;
        return f;
    }

private:
    SensorModel model_;
    Rng rng_;
    std::int64_t origin_ms_;
    WalkState walk_;
};

} // namespace rtsync::sim
