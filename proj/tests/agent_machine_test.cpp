// The agent state machine driven against an in-process server core.
#include "rtsync/agent/agent.hpp"
#include "rtsync/server/seed.hpp"
#include "rtsync/server/server.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace rtsync::agent;
using rtsync::datatree::Path;
using rtsync::datatree::Value;
namespace srv = rtsync::server;

namespace {

constexpr std::int64_t kT0 = 1'705'314'601'000; // just after the seed document's last_update

srv::ServerConfig server_config() {
    srv::ServerConfig c;
    c.tokens.emplace("device-secret", srv::TokenGrant{"ESP32_001", rtsync::rules::PrincipalKind::Device});
    c.tokens.emplace("dashboard-secret", srv::TokenGrant{"dashboard", rtsync::rules::PrincipalKind::User});
    return c;
}

struct ConstantSensors : SensorSource {
    SensorFrame read(std::int64_t now) override { return SensorFrame{23.2, 72.2, 17.68, now}; }
};

struct RampSensors : SensorSource {
    double t = 20;
    SensorFrame read(std::int64_t now) override {
        t = t >= 40 ? 20 : t + 0.5;
        return SensorFrame{t, 50, 100, now};
    }
};

// Transport wired straight into a server session. Replies (and fan-out for
// the agent's session) are queued and handed to the agent on the next tick.
struct Loopback : Transport {
    srv::Server server{server_config(), srv::example_document()};
    std::optional<srv::SessionId> sid;
    std::int64_t now = kT0;
    std::function<bool(const WireMessage&)> refuse = [](const WireMessage&) { return false; };
    std::function<bool(const WireMessage&)> lose = [](const WireMessage&) { return false; };
    std::vector<WireMessage> sent;
    std::vector<std::int64_t> sent_at;
    std::deque<WireMessage> inbound;

    bool send(const WireMessage& msg) override {
        if (refuse(msg)) {
            return false;
        }
        sent.push_back(msg);
        sent_at.push_back(now);
        if (lose(msg)) {
            return true;
        }
        if (!sid || !server.is_open(*sid)) {
            sid = server.open_session(now);
        }
        route(server.handle_message(*sid, msg, now));
        return true;
    }
    void reset() override {
        if (sid) {
            server.close_session(*sid);
        }
        sid.reset();
    }
    void route(const std::vector<srv::Outbound>& out) {
        for (const auto& o : out) {
            if (sid && o.to == *sid) {
                inbound.push_back(o.msg);
            }
        }
    }

    // A dashboard session writing an LED.
    std::optional<std::uint64_t> toggle(const std::string& led, bool value) {
        const auto dash = server.open_session(now);
        server.handle_message(dash, {1, srv::Auth{"dashboard-secret"}}, now);
        const auto out = server.handle_message(dash, {2, srv::Put{"/leds/" + led, Value(value), 0}}, now);
        route(out);
        server.close_session(dash);
        const auto* ack = out.at(0).msg.as<srv::Ack>();
        return ack ? ack->revision : std::nullopt;
    }

    std::size_t count_sent(const std::function<bool(const WireMessage&)>& pred) const {
        return static_cast<std::size_t>(std::count_if(sent.begin(), sent.end(), pred));
    }
};

bool is_frame(const WireMessage& m) {
    const auto* u = m.as<srv::Update>();
    return u && !u->ops.empty() && u->ops[0].path == "/sensors/temperature";
}

bool is_subscribe(const WireMessage& m, const char* path) {
    const auto* s = m.as<srv::Subscribe>();
    return s && s->path == path;
}

struct Rig {
    Loopback link;
    ConstantSensors sensors;
    Agent agent;
    std::vector<Effect> effects;
    std::function<void(std::int64_t)> on_tick = [](std::int64_t) {};

    explicit Rig(AgentConfig c = {}, SensorSource* src = nullptr) : agent(c, link, src ? *src : sensors) {
        agent.start(kT0);
    }

    // Ticks every 10 ms until `until` (relative to kT0).
    void run_until(std::int64_t until) {
        for (std::int64_t t = link.now; t <= kT0 + until; t += 10) {
            link.now = t;
            while (!link.inbound.empty()) {
                agent.receive(link.inbound.front(), t);
                link.inbound.pop_front();
            }
            on_tick(t);
            auto out = agent.step(t);
            effects.insert(effects.end(), out.begin(), out.end());
        }
        link.now = kT0 + until + 10;
    }

    std::vector<ActuatorEffect> actuations() const {
        std::vector<ActuatorEffect> r;
        for (const auto& e : effects) {
            if (const auto* a = std::get_if<ActuatorEffect>(&e)) {
                r.push_back(*a);
            }
        }
        return r;
    }

    std::optional<Value> tree(const char* path) const { return link.server.snapshot()->get(*Path::parse(path)); }

    // Stops sampling and lets outstanding replies land.
    void quiesce(std::int64_t until) {
        agent.set_sampling(false);
        run_until(until);
    }
};

} // namespace

TEST(AgentMachine, SixtyTransmissionsInSixtySeconds) {
    Rig rig;
    rig.run_until(59'990);
    EXPECT_EQ(rig.link.count_sent(is_frame), 60u);
    EXPECT_EQ(rig.agent.uplink().counters().produced, 60u);
    EXPECT_EQ(rig.agent.uplink().counters().delivered_first_pass, 60u);
    EXPECT_EQ(rig.tree("/sensors/temperature"), Value(23.2));
    EXPECT_EQ(rig.agent.link_state(), LinkState::Online);
}

TEST(AgentMachine, IdleLinkNeverReconnects) {
    Rig rig;
    rig.run_until(120'000);
    EXPECT_EQ(rig.agent.counters().reconnects, 0u);
    EXPECT_EQ(rig.agent.counters().link_failures, 0u);
    EXPECT_EQ(rig.agent.health().mode, Mode::Normal);
}

TEST(AgentMachine, CommandIsAppliedAndAcknowledged) {
    Rig rig;
    rig.run_until(2'000);
    const auto rev = rig.link.toggle("led1", true);
    ASSERT_TRUE(rev);
    rig.run_until(4'000);
    const auto acts = rig.actuations();
    ASSERT_EQ(acts.size(), 3u); // both subscription snapshots, then the command
    EXPECT_EQ(acts[0].revision, 0u);
    EXPECT_EQ(acts[2], (ActuatorEffect{"led1", true, *rev}));
    EXPECT_TRUE(rig.agent.commands().actuators().current_led1);
    // Tree, actuator state and acknowledgment agree once quiet.
    EXPECT_EQ(rig.tree("/leds/led1"), Value(true));
    EXPECT_EQ(rig.tree("/metadata/ack/led1/revision"), Value(static_cast<double>(*rev)));
    rig.run_until(12'000);
    EXPECT_EQ(rig.tree("/metadata/status/led1"), Value(true));
}

TEST(AgentMachine, DuplicateEventIsReplayRejected) {
    Rig rig;
    rig.run_until(1'000);
    const auto before = rig.actuations().size();
    const auto replayed = rig.agent.counters().commands_replayed;
    rig.link.toggle("led2", true);
    const auto dup = rig.link.inbound.back();
    rig.run_until(1'100);
    rig.agent.receive(dup, rig.link.now);
    rig.run_until(1'200);
    EXPECT_EQ(rig.actuations().size(), before + 1);
    EXPECT_EQ(rig.agent.counters().commands_replayed, replayed + 1);
}

TEST(AgentMachine, StalenessAtTheMachineBoundary) {
    for (const auto& [age, accepted] : std::vector<std::pair<std::int64_t, bool>>{
             {4999, true}, {5000, true}, {5001, false}, {60000, false}}) {
        Loopback link;
        ConstantSensors sensors;
        Agent agent({}, link, sensors);
        const auto r = agent.handle_command({"led1", true, kT0 - age, 3}, kT0);
        ASSERT_TRUE(r);
        EXPECT_EQ(*r == CommandOutcome::Accepted, accepted) << age;
        EXPECT_EQ(agent.commands().actuators().current_led1, accepted) << age;
    }
}

TEST(AgentMachine, StaleEventCausesNoActuation) {
    Rig rig;
    rig.run_until(1'000);
    const auto actuations = rig.actuations().size();
    const auto stale = rig.agent.counters().commands_stale;
    rig.agent.receive(WireMessage{900, srv::Event{1, 50, "/leds/led1", Value(true), rig.link.now - 60'000}},
                      rig.link.now);
    rig.run_until(1'100);
    EXPECT_EQ(rig.actuations().size(), actuations);
    EXPECT_EQ(rig.agent.counters().commands_stale, stale + 1);
}

TEST(AgentMachine, StatusCadence) {
    Loopback link;
    ConstantSensors sensors;
    Agent agent({}, link, sensors);
    EXPECT_TRUE(agent.periodic_status_update(0));
    EXPECT_FALSE(agent.periodic_status_update(9'000));
    const auto second = agent.periodic_status_update(10'000);
    ASSERT_TRUE(second);
    ASSERT_EQ(second->ops.size(), 1u);
    EXPECT_EQ(second->ops[0].path, "/metadata/status");
    EXPECT_EQ(*second->ops[0].value->find("mode"), Value("normal"));
}

TEST(AgentMachine, SafeModeAfterThreeFailedRecoveriesThenResetKeepsBuffer) {
    Rig rig;
    rig.link.refuse = [](const WireMessage&) { return true; };
    std::vector<std::uint64_t> before_reset;
    rig.on_tick = [&](std::int64_t) {
        if (rig.agent.counters().resets == 0) {
            before_reset.clear();
            for (const auto& f : rig.agent.uplink().frames()) {
                before_reset.push_back(f.seq);
            }
        }
    };
    bool saw_safe = false;
    std::optional<rtsync::server::Update> safe_status;
    for (std::int64_t t = 0; t <= 10'000 && rig.agent.counters().resets == 0; t += 500) {
        rig.run_until(t);
        if (rig.agent.health().mode == Mode::SafeMode && !saw_safe) {
            saw_safe = true;
            EXPECT_GE(rig.agent.health().consecutive_failures, 3u);
            safe_status = rig.agent.periodic_status_update(rig.link.now + 10'000);
        }
    }
    ASSERT_TRUE(saw_safe);
    ASSERT_EQ(rig.agent.counters().resets, 1u);
    EXPECT_EQ(rig.agent.counters().safe_mode_entries, 1u);
    ASSERT_TRUE(safe_status);
    const auto& status = *safe_status->ops[0].value;
    EXPECT_EQ(status.as_branch().size(), 1u);
    EXPECT_EQ(*status.find("mode"), Value("safe"));

    ASSERT_FALSE(before_reset.empty());
    std::vector<std::uint64_t> after;
    for (const auto& f : rig.agent.uplink().frames()) {
        after.push_back(f.seq);
    }
    ASSERT_GE(after.size(), before_reset.size());
    EXPECT_TRUE(std::equal(before_reset.begin(), before_reset.end(), after.begin()));
    EXPECT_EQ(rig.agent.health().mode, Mode::Normal);
}

TEST(AgentMachine, ProbeScheduleAndDrainAfterOutage) {
    AgentConfig c;
    c.safe_mode_threshold = 1000; // isolate the probe schedule from the reset path
    Rig rig(c);
    rig.run_until(3'000);
    bool outage = true;
    rig.link.lose = [&](const WireMessage&) { return outage; };
    rig.run_until(40'000);
    ASSERT_EQ(rig.agent.link_state(), LinkState::Reconnecting);
    const auto& delays = rig.agent.probe_delays();
    ASSERT_GE(delays.size(), 6u);
    EXPECT_EQ(std::vector<std::int64_t>(delays.begin(), delays.begin() + 6),
              (std::vector<std::int64_t>{500, 1000, 2000, 4000, 8000, 8000}));

    const auto produced = rig.agent.uplink().counters().produced;
    outage = false;
    rig.run_until(60'000);
    EXPECT_EQ(rig.agent.link_state(), LinkState::Online);
    EXPECT_EQ(rig.agent.counters().reconnects, 1u);
    EXPECT_GT(produced, 30u);
    // Everything produced during the outage arrived, and the tree shows the newest sample.
    EXPECT_EQ(rig.agent.uplink().counters().dropped, 0u);
    EXPECT_LE(rig.agent.uplink().size(), 1u);
    EXPECT_TRUE(rig.agent.uplink().conserved());
    ASSERT_TRUE(rig.agent.uplink().last_delivered());
    EXPECT_GE(rig.agent.uplink().last_delivered()->sample_time_ms, kT0 + 59'000);
}

namespace {

struct RampRun {
    std::vector<double> committed; // temperatures in commit order
    std::uint64_t produced = 0, delivered = 0, dropped = 0, rejected = 0;
    bool conserved = false;
    std::optional<Value> tree_temperature;
    std::optional<double> last_delivered;
};

RampRun ramp_with_three_losses(bool silent) {
    RampSensors ramp;
    Rig rig({}, &ramp);
    RampRun r;
    rig.link.server.set_commit_observer([&](const rtsync::server::CommitRecord& c, const rtsync::datatree::Tree&) {
        if (c.ops.size() == 4 && c.ops[0].path.str() == "/sensors/temperature") {
            r.committed.push_back(c.ops[0].value->as_number());
        }
    });
    rig.run_until(1'500);
    int to_lose = 3;
    auto drop_three = [&](const WireMessage& m) { return is_frame(m) && to_lose-- > 0; };
    if (silent) {
        rig.link.lose = drop_three;
    } else {
        rig.link.refuse = drop_three;
    }
    rig.run_until(15'000);
    rig.quiesce(30'000);
    const auto& u = rig.agent.uplink();
    r.produced = u.counters().produced;
    r.delivered = u.counters().delivered;
    r.dropped = u.counters().dropped;
    r.rejected = u.counters().rejected;
    r.conserved = u.conserved() && u.size() == 0;
    r.tree_temperature = rig.tree("/sensors/temperature");
    if (u.last_delivered()) {
        r.last_delivered = u.last_delivered()->temperature_c;
    }
    return r;
}

} // namespace

// Refused sends hold the queue: the three frames go out late but in order.
TEST(AgentMachine, RefusedFramesArriveOldestFirst) {
    const auto r = ramp_with_three_losses(false);
    EXPECT_EQ(r.delivered, r.produced);
    EXPECT_EQ(r.dropped, 0u);
    EXPECT_TRUE(r.conserved);
    EXPECT_EQ(r.committed.size(), r.produced);
    EXPECT_TRUE(std::is_sorted(r.committed.begin(), r.committed.end())); // the ramp rises for 40 samples
    ASSERT_TRUE(r.last_delivered);
    EXPECT_EQ(r.tree_temperature, Value(*r.last_delivered));
}

// A frame lost after leaving the device is overtaken by the frames pipelined
// behind it; its late retransmission is refused by the server as older than
// the stored sample. The tree never moves backwards and the count balances.
TEST(AgentMachine, SilentlyLostFramesNeverRegressTheTree) {
    const auto r = ramp_with_three_losses(true);
    EXPECT_TRUE(r.conserved);
    EXPECT_EQ(r.delivered + r.dropped, r.produced);
    EXPECT_EQ(r.dropped, r.rejected);
    EXPECT_LE(r.dropped, 3u);
    EXPECT_TRUE(std::is_sorted(r.committed.begin(), r.committed.end()));
    ASSERT_TRUE(r.last_delivered);
    EXPECT_EQ(r.tree_temperature, Value(*r.last_delivered));
}

TEST(AgentMachine, LostSubscriptionIsRetried) {
    Rig rig;
    bool dropped = false;
    rig.link.lose = [&](const WireMessage& m) {
        if (!dropped && is_subscribe(m, "/leds/led2")) {
            dropped = true;
            return true;
        }
        return false;
    };
    rig.run_until(7'000);
    EXPECT_EQ(rig.link.count_sent([](const WireMessage& m) { return is_subscribe(m, "/leds/led2"); }), 2u);
    const auto rev = rig.link.toggle("led2", true);
    rig.run_until(7'100);
    ASSERT_FALSE(rig.actuations().empty());
    EXPECT_EQ(rig.actuations().back(), (ActuatorEffect{"led2", true, *rev}));
}

TEST(AgentMachine, RefusedTokenBacksOff) {
    AgentConfig c;
    c.token = "wrong";
    c.safe_mode_threshold = 1000; // keep the reset path out of the schedule
    Rig rig(c);
    rig.run_until(8'000);
    std::vector<std::int64_t> auth_times;
    for (std::size_t i = 0; i < rig.link.sent.size(); ++i) {
        if (rig.link.sent[i].is<srv::Auth>()) {
            auth_times.push_back(rig.link.sent_at[i] - kT0);
        }
    }
    // Each refusal is seen one 10 ms tick later, then the backoff delay runs.
    EXPECT_EQ(auth_times, (std::vector<std::int64_t>{0, 510, 1520, 3530, 7540}));
    EXPECT_EQ(rig.agent.uplink().counters().delivered, 0u);
    EXPECT_EQ(rig.link.server.revision().value, 0u);
}

TEST(AgentMachine, SessionLossReauthenticates) {
    Rig rig;
    rig.run_until(3'000);
    rig.link.server.close_session(*rig.link.sid); // server forgot us; transport reconnects silently
    rig.run_until(10'000);
    EXPECT_GE(rig.link.count_sent([](const WireMessage& m) { return m.is<srv::Auth>(); }), 2u);
    EXPECT_EQ(rig.agent.uplink().counters().dropped, 0u);
    EXPECT_EQ(rig.agent.uplink().counters().delivered, rig.agent.uplink().counters().produced - rig.agent.uplink().size());
    const auto rev = rig.link.toggle("led1", true);
    rig.run_until(10'100);
    ASSERT_FALSE(rig.actuations().empty());
    EXPECT_EQ(rig.actuations().back(), (ActuatorEffect{"led1", true, *rev}));
}

namespace {

std::vector<Effect> scripted_run(std::uint64_t seed) {
    Rig rig;
    std::mt19937_64 rng(seed);
    rig.link.lose = [&](const WireMessage&) { return rng() % 10 < 2; };
    rig.on_tick = [&](std::int64_t t) {
        if ((t - kT0) % 2'000 == 0 && t > kT0) {
            rig.link.toggle((t / 2'000) % 2 ? "led1" : "led2", (t / 4'000) % 2 == 0);
        }
        ASSERT_TRUE(rig.agent.uplink().conserved());
    };
    rig.run_until(90'000);
    return rig.effects;
}

} // namespace

TEST(AgentMachine, IdenticalScriptsYieldIdenticalEffects) {
    const auto a = scripted_run(31);
    const auto b = scripted_run(31);
    EXPECT_GT(a.size(), 100u);
    EXPECT_TRUE(a == b);
}

// Random loss, refusal and command traffic: conservation holds every tick and
// the tree, actuator state and acknowledgment agree once the link is quiet.
TEST(AgentMachineProperty, ConservationAndQuiescentAgreement) {
    for (std::uint64_t seed = 1; seed <= 40; ++seed) {
        Rig rig;
        std::mt19937_64 rng(seed);
        bool faulty = true;
        rig.link.lose = [&](const WireMessage&) { return faulty && rng() % 10 < 3; };
        rig.link.refuse = [&](const WireMessage&) { return faulty && rng() % 10 < 1; };
        rig.on_tick = [&](std::int64_t t) {
            if (faulty && rng() % 300 == 0) {
                rig.link.toggle(rng() % 2 ? "led1" : "led2", rng() % 2 == 0);
            }
            ASSERT_TRUE(rig.agent.uplink().conserved()) << "seed " << seed << " t " << t;
        };
        rig.run_until(60'000);
        faulty = false;
        rig.run_until(120'000);
        for (const char* led : {"led1", "led2"}) {
            const auto in_tree = rig.tree((std::string("/leds/") + led).c_str());
            const bool actuator = std::string(led) == "led1" ? rig.agent.commands().actuators().current_led1
                                                             : rig.agent.commands().actuators().current_led2;
            const auto last_rev = rig.agent.commands().last_revision(led);
            const auto ack = rig.tree((std::string("/metadata/ack/") + led + "/revision").c_str());
            if (last_rev == 0) {
                continue; // every command for this LED arrived stale or was never sent
            }
            EXPECT_EQ(ack, Value(static_cast<double>(last_rev))) << "seed " << seed << " " << led;
            EXPECT_EQ(in_tree, Value(actuator)) << "seed " << seed << " " << led;
        }
    }
}

// After a reset in a quiet system the subscription snapshot is old, yet it
// still restores the LEDs: it reports state, it is not a delayed command.
TEST(AgentMachine, SnapshotRestoresLedsAfterResetEvenWhenOld) {
    Rig rig;
    rig.run_until(1'000);
    const auto rev = rig.link.toggle("led1", true);
    rig.run_until(1'100);
    ASSERT_TRUE(rig.agent.commands().actuators().current_led1);
    // Server goes silent long enough for safe mode and a reset; nothing is committed meanwhile.
    rig.link.refuse = [](const WireMessage&) { return true; };
    rig.run_until(20'000);
    ASSERT_GE(rig.agent.counters().resets, 1u);
    rig.link.refuse = [](const WireMessage&) { return false; };
    rig.agent.set_sampling(false);
    rig.run_until(40'000);
    EXPECT_TRUE(rig.agent.commands().actuators().current_led1);
    const auto acts = rig.actuations();
    const auto last_led1 = std::find_if(acts.rbegin(), acts.rend(), [](const auto& a) { return a.target == "led1"; });
    ASSERT_NE(last_led1, acts.rend());
    EXPECT_TRUE(last_led1->value);
    EXPECT_GE(last_led1->revision, *rev); // snapshots carry the tree's revision
}
