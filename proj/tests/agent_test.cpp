#include "rtsync/agent/action_log.hpp"
#include "rtsync/agent/backoff.hpp"
#include "rtsync/agent/commands.hpp"
#include "rtsync/agent/config.hpp"
#include "rtsync/agent/filter.hpp"
#include "rtsync/agent/health.hpp"
#include "rtsync/agent/uplink.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

using namespace rtsync::agent;

using rtsync::oracle::ulp;

namespace {

SensorFrame frame(double t, double h, double d, std::int64_t at = 0) {
    return SensorFrame{t, h, d, at};
}

} // namespace

// --- filter --------------------------------------------------------------------

TEST(Filter, RangeVerdicts) {
    EXPECT_TRUE(validate_ranges(23.2, 72.2, 17.68).all());
    EXPECT_EQ(validate_ranges(55, 50, 100), (RangeVerdict{false, true, true}));
    EXPECT_TRUE(validate_ranges(0, 0, 2).all());
    EXPECT_TRUE(validate_ranges(50, 100, 400).all());
    EXPECT_EQ(validate_ranges(-0.01, 100.01, 1.99), (RangeVerdict{false, false, false}));
}

TEST(Filter, EmaSingleStep) {
    SensorFilter f;
    ASSERT_TRUE(f.apply(frame(20, 50, 100)));
    const auto out = f.apply(frame(30, 50, 100));
    ASSERT_TRUE(out);
    EXPECT_EQ(out->temperature_c, 27.0);
    SensorFilter g;
    g.apply(frame(23.2, 50, 100));
    EXPECT_EQ(g.apply(frame(23.2, 50, 100))->temperature_c, 23.2);
}

TEST(Filter, MedianRejectsSpike) {
    SensorFilter f;
    double last = 0;
    for (double d : {17.0, 18.0, 400.0, 17.0, 18.0}) {
        last = f.apply(frame(20, 50, d))->distance_cm;
    }
    EXPECT_EQ(last, 18);
    EXPECT_LE(f.state().d_buffer.size(), kMedianWindow);
}

TEST(Filter, WarmupPassesRawDistance) {
    SensorFilter f;
    EXPECT_EQ(f.apply(frame(20, 50, 30))->distance_cm, 30);
    EXPECT_EQ(f.apply(frame(20, 50, 300))->distance_cm, 300);
}

TEST(Filter, FirstInvalidFrameIsSkipped) {
    SensorFilter f;
    const auto r = f.apply(frame(60, 50, 100));
    ASSERT_FALSE(r);
    EXPECT_EQ(r.error(), FilterError::NoValidReadingYet);
    EXPECT_FALSE(f.state().sensor_ok);
}

TEST(Filter, OutOfRangeFieldFallsBackToLastValid) {
    SensorFilter f;
    f.apply(frame(20, 50, 100));
    const auto out = f.apply(frame(20, 50, 1000)); // warm-up: raw 1000 is out of range
    ASSERT_TRUE(out);
    EXPECT_EQ(out->distance_cm, 100);
    EXPECT_EQ(out->temperature_c, 20);
    EXPECT_FALSE(f.state().sensor_ok);
    const auto nan = f.apply(frame(std::nan(""), 50, 100));
    ASSERT_TRUE(nan);
    EXPECT_EQ(nan->temperature_c, 20);
}

// Median of the current window equals sort-and-take-middle; the EMA matches
// the exact recurrence to within one rounding step; outputs always lie in range.
TEST(FilterProperty, MedianAndEmaOracles) {
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> t_dist(0, 50), h_dist(0, 100), d_dist(2, 400);
    for (int c = 0; c < 10'000; ++c) {
        SensorFilter f;
        std::vector<double> ds;
        double t_prev = 0, h_prev = 0;
        const int n = 1 + static_cast<int>(rng() % 12);
        for (int i = 0; i < n; ++i) {
            const double t = t_dist(rng), h = h_dist(rng), d = d_dist(rng);
            ds.push_back(d);
            const auto out = f.apply(frame(t, h, d, i));
            ASSERT_TRUE(out);
            if (ds.size() >= 5) {
                std::vector<double> w(ds.end() - 5, ds.end());
                std::sort(w.begin(), w.end());
                ASSERT_EQ(out->distance_cm, w[2]);
            } else {
                ASSERT_EQ(out->distance_cm, d);
            }
            if (i == 0) {
                ASSERT_EQ(out->temperature_c, t);
                ASSERT_EQ(out->humidity_pct, h);
            } else {
                const long double t_exact = (7.0L * t + 3.0L * t_prev) / 10.0L;
                const long double h_exact = (7.0L * h + 3.0L * h_prev) / 10.0L;
                ASSERT_LE(std::abs(out->temperature_c - t_exact), ulp(static_cast<double>(t_exact)));
                ASSERT_LE(std::abs(out->humidity_pct - h_exact), ulp(static_cast<double>(h_exact)));
            }
            t_prev = f.state().t_filtered;
            h_prev = f.state().h_filtered;
            ASSERT_TRUE(validate_ranges(out->temperature_c, out->humidity_pct, out->distance_cm).all());
        }
    }
}

TEST(FilterProperty, ConstantInputContracts) {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> dist(0, 50);
    for (int c = 0; c < 10'000; ++c) {
        const double t0 = dist(rng), target = dist(rng);
        SensorFilter f;
        f.apply(frame(t0, 50, 100));
        double bound = std::abs(t0 - target);
        for (int k = 1; k <= 25; ++k) {
            f.apply(frame(target, 50, 100));
            bound *= 0.3;
            // Slack of a few ulps of the operands: each step rounds once.
            ASSERT_LE(std::abs(f.state().t_filtered - target), bound + 4 * ulp(std::max(t0, target))) << "k=" << k;
        }
    }
}

// --- commands ---------------------------------------------------------------------

TEST(CommandGate, StalenessBoundaryIsExact) {
    for (const auto& [age, fresh] : std::vector<std::pair<std::int64_t, bool>>{
             {0, true}, {4999, true}, {5000, true}, {5001, false}, {60000, false}}) {
        CommandGate gate;
        const auto r = gate.handle({"led1", true, 1'000'000, 1}, 1'000'000 + age);
        ASSERT_TRUE(r);
        EXPECT_EQ(*r, fresh ? CommandOutcome::Accepted : CommandOutcome::RejectedStale) << age;
        EXPECT_EQ(gate.actuators().current_led1, fresh) << age;
    }
}

TEST(CommandGate, DenseAgesAroundBoundary) {
    for (std::int64_t age = 4900; age <= 5100; ++age) {
        CommandGate gate;
        EXPECT_EQ(*gate.handle({"led2", true, 0, 7}, age),
                  age <= 5000 ? CommandOutcome::Accepted : CommandOutcome::RejectedStale);
    }
}

TEST(CommandGate, ReplayAndUnknownTarget) {
    CommandGate gate;
    EXPECT_EQ(*gate.handle({"led1", true, 0, 5}, 0), CommandOutcome::Accepted);
    EXPECT_EQ(*gate.handle({"led1", false, 0, 5}, 0), CommandOutcome::RejectedReplay);
    EXPECT_EQ(*gate.handle({"led1", false, 0, 4}, 0), CommandOutcome::RejectedReplay);
    EXPECT_TRUE(gate.actuators().current_led1);
    EXPECT_EQ(*gate.handle({"led2", true, 0, 1}, 0), CommandOutcome::Accepted); // per target
    EXPECT_EQ(gate.handle({"led3", true, 0, 9}, 0).error(), CommandError::UnknownTarget);
}

// Duplicated and reordered deliveries never move an LED back to an older
// command's value.
TEST(CommandGateProperty, PermutedDeliveriesNeverRegress) {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 2000; ++trial) {
        std::vector<CommandEnvelope> cmds;
        for (std::uint64_t rev = 1; rev <= 12; ++rev) {
            cmds.push_back({rng() % 2 ? "led1" : "led2", rng() % 2 == 0, 0, rev});
        }
        std::vector<CommandEnvelope> deliveries = cmds;
        for (int d = 0; d < 6; ++d) {
            deliveries.push_back(cmds[rng() % cmds.size()]);
        }
        std::shuffle(deliveries.begin(), deliveries.end(), rng);
        CommandGate gate;
        std::map<std::string, std::uint64_t> best;
        for (const auto& c : deliveries) {
            gate.handle(c, 0);
            best[c.target] = std::max(best[c.target], c.revision);
            const auto& a = gate.actuators();
            for (const auto& [target, rev] : best) {
                const bool expected = cmds[rev - 1].value;
                ASSERT_EQ(target == "led1" ? a.current_led1 : a.current_led2, expected);
            }
        }
    }
}

// --- backoff & uplink ------------------------------------------------------------

TEST(Backoff, Schedule) {
    const BackoffPolicy p;
    std::vector<std::int64_t> got;
    for (unsigned n = 0; n < 6; ++n) {
        got.push_back(p.delay(n));
    }
    EXPECT_EQ(got, (std::vector<std::int64_t>{500, 1000, 2000, 4000, 8000, 8000}));
    EXPECT_EQ(p.delay(60), 8000);
}

namespace {

struct ScriptedSender {
    std::vector<bool> script; // outcome per attempt; true once exhausted
    std::vector<std::int64_t> attempt_times;
    std::int64_t now = 0;
    std::uint64_t next_id = 1;

    FrameSender fn() {
        return [this](const ProcessedFrame&) -> std::optional<std::uint64_t> {
            const auto n = attempt_times.size();
            attempt_times.push_back(now);
            if (n < script.size() && !script[n]) {
                return std::nullopt;
            }
            return next_id++;
        };
    }
};

} // namespace

TEST(Uplink, FailFailSucceedFollowsBackoff) {
    Uplink u;
    ScriptedSender s;
    s.script = {false, false, true};
    u.push(ProcessedFrame{20, 50, 100, 0}, 0);
    for (std::int64_t t = 0; t <= 3000; t += 10) {
        s.now = t;
        u.pump(t, true, s.fn());
    }
    EXPECT_EQ(s.attempt_times, (std::vector<std::int64_t>{0, 500, 1500}));
    ASSERT_TRUE(u.on_ack(1));
    EXPECT_EQ(u.counters().delivered_first_pass, 1u);
    EXPECT_EQ(u.size(), 0u);
}

TEST(Uplink, ThreeFailuresBufferThenRetryAfter30s) {
    Uplink u;
    ScriptedSender s;
    s.script = {false, false, false, false};
    u.push(ProcessedFrame{20, 50, 100, 0}, 0);
    bool failure = false;
    for (std::int64_t t = 0; t <= 40'000; t += 10) {
        s.now = t;
        failure |= u.pump(t, false, s.fn()).link_failure;
        if (t <= 1500) {
            u.pump(t, true, s.fn()); // online for the in-line round
        }
    }
    ASSERT_GE(s.attempt_times.size(), 4u);
    EXPECT_EQ(std::vector<std::int64_t>(s.attempt_times.begin(), s.attempt_times.begin() + 3),
              (std::vector<std::int64_t>{0, 500, 1500}));
    EXPECT_EQ(s.attempt_times[3], 31'500);
    EXPECT_EQ(u.counters().buffered, 1u);
    EXPECT_EQ(u.frames().front().state, FrameState::Buffered);
}

TEST(Uplink, UnansweredAttemptTimesOut) {
    Uplink u;
    ScriptedSender s;
    u.push(ProcessedFrame{}, 0);
    u.pump(0, true, s.fn());
    EXPECT_EQ(u.in_flight(), 1u);
    s.now = 4999;
    u.pump(4999, true, s.fn());
    EXPECT_EQ(s.attempt_times.size(), 1u);
    s.now = 5000;
    u.pump(5000, true, s.fn()); // timeout -> backoff 500 ms
    s.now = 5500;
    u.pump(5500, true, s.fn());
    EXPECT_EQ(s.attempt_times, (std::vector<std::int64_t>{0, 5500}));
    EXPECT_TRUE(u.on_ack(1)); // a late ack for the first attempt still counts
}

TEST(Uplink, OverflowDropsOldest) {
    UplinkConfig c;
    c.capacity = 3;
    Uplink u(c);
    for (int i = 0; i < 5; ++i) {
        u.push(ProcessedFrame{static_cast<double>(i), 0, 2, i}, i);
    }
    EXPECT_EQ(u.size(), 3u);
    EXPECT_EQ(u.counters().dropped, 2u);
    EXPECT_EQ(u.frames().front().frame.temperature_c, 2);
    EXPECT_TRUE(u.conserved());
}

TEST(Uplink, ResumeDrainsOldestFirst) {
    Uplink u;
    ScriptedSender s;
    s.script = std::vector<bool>(9, false);
    for (int i = 0; i < 3; ++i) {
        u.push(ProcessedFrame{static_cast<double>(i), 0, 2, i}, 0);
    }
    for (std::int64_t t = 0; t <= 2000; t += 10) {
        s.now = t;
        u.pump(t, true, s.fn());
    }
    EXPECT_EQ(u.frames().front().state, FrameState::Buffered);
    u.resume(2000);
    std::vector<double> order;
    u.pump(2000, true, [&](const ProcessedFrame& f) -> std::optional<std::uint64_t> {
        order.push_back(f.temperature_c);
        return 100 + order.size();
    });
    EXPECT_EQ(order, (std::vector<double>{0, 1, 2}));
}

// Random ack/loss/timeout interleavings keep
// delivered + queued + dropped == produced at every step.
TEST(UplinkProperty, ConservationUnderRandomTraffic) {
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 200; ++trial) {
        UplinkConfig c;
        c.capacity = 1 + rng() % 20;
        Uplink u(c);
        std::vector<std::uint64_t> outstanding;
        std::uint64_t next_id = 1;
        std::int64_t now = 0;
        for (int i = 0; i < 400; ++i) {
            now += static_cast<std::int64_t>(rng() % 700);
            switch (rng() % 5) {
            case 0: u.push(ProcessedFrame{}, now); break;
            case 1:
                u.pump(now, rng() % 4 != 0, [&](const ProcessedFrame&) -> std::optional<std::uint64_t> {
                    if (rng() % 3 == 0) return std::nullopt;
                    outstanding.push_back(next_id);
                    return next_id++;
                });
                break;
            case 2:
                if (!outstanding.empty()) {
                    const auto k = rng() % outstanding.size();
                    if (rng() % 6 == 0) u.on_rejected(outstanding[k]);
                    else u.on_ack(outstanding[k]);
                    outstanding.erase(outstanding.begin() + static_cast<std::ptrdiff_t>(k));
                }
                break;
            case 3: u.resume(now); break;
            default: u.requeue_in_flight(now); break;
            }
            ASSERT_TRUE(u.conserved());
            ASSERT_LE(u.size(), c.capacity);
            ASSERT_LE(u.in_flight(), c.max_in_flight);
        }
    }
}

// --- health ------------------------------------------------------------------------

TEST(Health, SafeModeAfterThreeFailedRecoveries) {
    HealthMonitor m;
    HealthObservation down;
    down.link_ok = false;
    for (unsigned i = 1; i <= 3; ++i) {
        EXPECT_EQ(m.check(down), std::vector<RecoveryAction>{RecoveryAction::Reconnect});
        EXPECT_EQ(m.state().consecutive_failures, i);
        EXPECT_EQ(m.state().mode, Mode::Normal);
    }
    EXPECT_EQ(m.check(down), (std::vector<RecoveryAction>{RecoveryAction::EnterSafeMode, RecoveryAction::ScheduleReset}));
    EXPECT_EQ(m.state().mode, Mode::SafeMode);
    EXPECT_TRUE(m.check(down).empty());
}

TEST(Health, CleanCheckClearsFailures) {
    HealthMonitor m;
    HealthObservation bad;
    bad.sensor_ok = false;
    bad.buffer_ok = false;
    EXPECT_EQ(m.check(bad), (std::vector<RecoveryAction>{RecoveryAction::RecalibrateSensors, RecoveryAction::FlushBuffer}));
    EXPECT_TRUE(m.check(HealthObservation{}).empty());
    EXPECT_EQ(m.state().consecutive_failures, 0u);
}

// --- action log and config ---------------------------------------------------------------

TEST(ActionLog, MirrorsJsonLines) {
    std::ostringstream sink;
    ActionLog log(&sink);
    log.append(5, ActionKind::Cmd, "applied led1=true");
    log.append(6, ActionKind::Mode, "full reset");
    EXPECT_EQ(sink.str(), "{\"detail\":\"applied led1=true\",\"kind\":\"cmd\",\"time_ms\":5}\n"
                          "{\"detail\":\"full reset\",\"kind\":\"mode\",\"time_ms\":6}\n");
    EXPECT_EQ(log.records().size(), 2u);
}

TEST(AgentConfig, JsonRoundTripAndValidation) {
    AgentConfig c;
    c.sample_period_ms = 250;
    c.backoff.cap_ms = 4000;
    const auto back = agent_config_from_json(to_json(c));
    EXPECT_EQ(back.sample_period_ms, 250);
    EXPECT_EQ(back.backoff.cap_ms, 4000);
    EXPECT_THROW(agent_config_from_json(nlohmann::json{{"no_such_key", 1}}), std::exception);
    EXPECT_THROW(agent_config_from_json(nlohmann::json{{"sample_period_ms", "fast"}}), std::exception);
    EXPECT_NO_THROW(load_agent_config(std::string(RTSYNC_SOURCE_DIR) + "/config/agent.json"));
}

TEST(CommandGate, PowerCycleAllowsOneResyncOfLastRevision) {
    CommandGate gate;
    EXPECT_EQ(*gate.handle({"led1", true, 0, 8}, 0), CommandOutcome::Accepted);
    gate.power_cycle();
    EXPECT_FALSE(gate.actuators().current_led1);
    EXPECT_EQ(*gate.handle({"led1", false, 0, 7}, 0), CommandOutcome::RejectedReplay);
    EXPECT_EQ(*gate.handle({"led1", true, 0, 8}, 0), CommandOutcome::Accepted);
    EXPECT_TRUE(gate.actuators().current_led1);
    EXPECT_EQ(*gate.handle({"led1", true, 0, 8}, 0), CommandOutcome::RejectedReplay);
    EXPECT_EQ(*gate.handle({"led2", true, 0, 1}, 0), CommandOutcome::Accepted); // never-seen target unaffected
}
