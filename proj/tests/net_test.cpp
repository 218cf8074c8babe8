#include "net_support.hpp"

#include "rtsync/net/live_agent.hpp"
#include "rtsync/server/persistence.hpp"
#include "rtsync/sim/sensors.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <thread>

using namespace rtsync;
using namespace rtsync::testing;
using namespace std::chrono_literals;
using server::Ack;
using server::Err;
using server::Event;

namespace {

// Drops the fields that legitimately differ between two sessions.
std::string normalized(server::WireMessage m) {
    if (auto* ev = std::get_if<Event>(&m.body)) {
        m.msg_id = 0;
        ev->sub_id = 0;
        ev->server_time_ms = 0;
    } else if (auto* ack = std::get_if<Ack>(&m.body)) {
        ack->server_time_ms = 0;
        ack->sub_id.reset();
    }
    return server::encode(m);
}

std::vector<std::string> script(const net::Endpoint& ep) {
    auto c = login(ep);
    std::vector<std::string> frames;
    auto record = [&](auto body) {
        auto r = c.request(body);
        EXPECT_TRUE(r);
        frames.push_back(normalized(*r));
    };
    record(server::Subscribe{"/leds/led2"});
    auto snap = c.next_message(2s);
    EXPECT_TRUE(snap && *snap);
    frames.push_back(normalized(**snap));
    record(server::Get{"/sensors/temperature"});
    record(server::Put{"/leds/led2", datatree::Value(7), 0});
    record(server::Get{"/nope/../x"});
    return frames;
}

} // namespace

TEST(Endpoint, ParsesAllForms) {
    auto a = net::parse_endpoint("localhost:7070");
    ASSERT_TRUE(a);
    EXPECT_EQ(a->scheme, net::Scheme::Tcp);
    EXPECT_EQ(a->host, "localhost");
    EXPECT_EQ(a->port, 7070);
    auto b = net::parse_endpoint("ws://10.0.0.2:81/sync");
    ASSERT_TRUE(b);
    EXPECT_EQ(b->scheme, net::Scheme::WebSocket);
    EXPECT_EQ(b->target, "/sync");
    EXPECT_EQ(net::parse_endpoint(b->to_string())->to_string(), b->to_string());
    EXPECT_TRUE(net::parse_endpoint("tcp://h:1"));
    EXPECT_FALSE(net::parse_endpoint("h"));
    EXPECT_FALSE(net::parse_endpoint("h:99999"));
    EXPECT_FALSE(net::parse_endpoint("http://h:1"));
}

TEST(NetServer, TcpAndWebSocketCarryTheSameFrames) {
    {
        LiveServer s;
        const auto over_tcp = script(s.tcp());
        ASSERT_EQ(over_tcp.size(), 5u);
        EXPECT_EQ(over_tcp[1], R"({"id":0,"kind":"EVENT","path":"/leds/led2","revision":0,"server_time_ms":0,"sub_id":0,"value":false})");
        EXPECT_NE(over_tcp[3].find("MustBeBoolean at /leds/led2"), std::string::npos);
    }
    // A fresh server, so revisions line up.
    LiveServer s;
    const auto over_ws = script(s.ws());
    LiveServer t;
    EXPECT_EQ(over_ws, script(t.tcp()));
}

TEST(NetServer, WebSocketMessagesAreExactlyTheEncodedFrames) {
    LiveServer s;
    auto ch = net::open_channel(s.ws(), 2s);
    ASSERT_TRUE(ch);
    const server::WireMessage ping{41, server::Ping{}};
    ASSERT_TRUE((*ch)->write(server::encode(ping)));
    auto text = (*ch)->read(2s);
    ASSERT_TRUE(text && *text);
    auto decoded = server::decode(**text);
    ASSERT_TRUE(decoded);
    EXPECT_EQ(server::encode(*decoded), **text);
    ASSERT_TRUE(decoded->is<server::Pong>());
    EXPECT_EQ(decoded->as<server::Pong>()->msg_id, 41u);
}

TEST(NetServer, FanOutReachesBothTransports) {
    LiveServer s;
    auto tcp_watch = login(s.tcp());
    auto ws_watch = login(s.ws());
    for (auto* c : {&tcp_watch, &ws_watch}) {
        ASSERT_TRUE(c->request(server::Subscribe{"/leds"}));
        ASSERT_TRUE(c->next_message(2s)); // snapshot
    }
    auto writer = login(s.tcp());
    for (int i = 0; i < 20; ++i) {
        auto r = writer.request(server::Put{"/leds/led1", datatree::Value(i % 2 == 0), 0});
        ASSERT_TRUE(r && r->is<Ack>());
    }
    for (auto* c : {&tcp_watch, &ws_watch}) {
        for (std::uint64_t rev = 1; rev <= 20; ++rev) {
            auto m = c->next_message(2s);
            ASSERT_TRUE(m && *m);
            const auto* ev = (*m)->as<Event>();
            ASSERT_TRUE(ev);
            EXPECT_EQ(ev->revision, rev);
            EXPECT_EQ(ev->path, "/leds/led1");
            EXPECT_EQ(ev->value, datatree::Value(rev % 2 == 1));
        }
    }
    EXPECT_EQ(s.server.snapshot()->revision().value, 20u);
}

TEST(NetServer, BadTokenAndUnauthenticatedRequestsAreRefused) {
    LiveServer s;
    for (const auto& ep : {s.tcp(), s.ws()}) {
        auto c = net::Client::connect(ep);
        ASSERT_TRUE(c);
        auto g = c->request(server::Get{"/leds"});
        ASSERT_TRUE(g && g->is<Err>());
        EXPECT_EQ(g->as<Err>()->code, server::ErrCode::AuthRequired);
        auto a = c->request(server::Auth{"wrong"});
        ASSERT_TRUE(a && a->is<Err>());
        EXPECT_EQ(a->as<Err>()->code, server::ErrCode::Denied);
        EXPECT_EQ(a->as<Err>()->reason, "InvalidToken");
    }
}

TEST(NetServer, GarbageFrameGetsMalformedAndSessionSurvives) {
    LiveServer s;
    auto ch = net::open_channel(s.tcp(), 2s);
    ASSERT_TRUE(ch);
    ASSERT_TRUE((*ch)->write(R"({"id":9,"kind":"PUT"})"));
    auto reply = (*ch)->read(2s);
    ASSERT_TRUE(reply && *reply);
    auto m = server::decode(**reply);
    ASSERT_TRUE(m && m->is<Err>());
    EXPECT_EQ(m->as<Err>()->code, server::ErrCode::Malformed);
    EXPECT_EQ(m->as<Err>()->msg_id, 9u);
    net::Client c(std::move(*ch));
    auto pong = c.request(server::Ping{});
    ASSERT_TRUE(pong && pong->is<server::Pong>());
}

TEST(NetServer, StateSurvivesRestart) {
    TempDir dir;
    {
        LiveServer s(loopback_options(dir.path()));
        auto c = login(s.tcp());
        ASSERT_TRUE(c.request(server::Put{"/leds/led1", datatree::Value(true), 0})->is<Ack>());
        ASSERT_TRUE(c.request(server::Put{"/leds/led2", datatree::Value(true), 0})->is<Ack>());
    }
    {
        LiveServer s(loopback_options(dir.path()));
        EXPECT_EQ(s.server.snapshot()->revision().value, 2u);
        auto c = login(s.tcp());
        auto g = c.request(server::Get{"/leds/led2"});
        ASSERT_TRUE(g && g->is<Ack>());
        EXPECT_EQ(g->as<Ack>()->value, datatree::Value(true));
        auto p = c.request(server::Put{"/leds/led1", datatree::Value(false), 0});
        EXPECT_EQ(p->as<Ack>()->revision, 3u);
    }
}

TEST(NetServer, TornLogTailIsDiscardedAndAppendsStayReadable) {
    TempDir dir;
    {
        LiveServer s(loopback_options(dir.path()));
        auto c = login(s.tcp());
        ASSERT_TRUE(c.request(server::Put{"/leds/led1", datatree::Value(true), 0})->is<Ack>());
    }
    // A crash halfway through writing the next record.
    std::ofstream(dir.path() / server::CommitLog::kLogFile, std::ios::app | std::ios::binary)
        << R"({"revision":2,"server_time_ms":17053)";
    for (int restart = 0; restart < 2; ++restart) {
        LiveServer s(loopback_options(dir.path()));
        EXPECT_EQ(s.server.snapshot()->revision().value, 1u + restart);
        auto c = login(s.tcp());
        auto p = c.request(server::Put{"/leds/led2", datatree::Value(restart == 0), 0});
        ASSERT_TRUE(p && p->is<Ack>());
        EXPECT_EQ(p->as<Ack>()->revision, 2u + restart);
    }
    auto recovered = server::CommitLog::recover(dir.path());
    ASSERT_TRUE(recovered);
    EXPECT_EQ(recovered->tree.revision().value, 3u);
}

TEST(LiveAgent, StreamsSensorsAndFollowsCommands) {
    LiveServer s;
    agent::AgentConfig cfg;
    cfg.server = s.tcp_address();
    cfg.sample_period_ms = 100;
    cfg.status_interval_ms = 500;
    struct Recorder : agent::Actuator {
        std::vector<std::pair<std::string, bool>> calls;
        void set(std::string_view t, bool on) override { calls.emplace_back(std::string(t), on); }
    } actuator;
    sim::SensorModel model;
    sim::SyntheticSensors sensors(model, sim::Rng(1), 0);
    net::LiveTransport transport(*net::parse_endpoint(cfg.server));
    agent::Agent a(cfg, transport, sensors, &actuator);
    std::atomic<bool> stop{false};

    std::uint64_t command_revision = 0;
    std::thread dashboard([&] {
        std::this_thread::sleep_for(1000ms);
        auto c = login(s.tcp());
        auto r = c.request(server::Put{"/leds/led2", datatree::Value(true), 0});
        ASSERT_TRUE(r && r->is<Ack>());
        command_revision = r->as<Ack>()->revision.value_or(0);
    });
    net::LiveAgentOptions options;
    options.duration_ms = 2500;
    options.max_poll = 20ms;
    net::run_live_agent(a, transport, stop, options, nullptr);
    dashboard.join();

    const auto& u = a.uplink().counters();
    EXPECT_GE(u.delivered, 15u);
    EXPECT_EQ(u.dropped, 0u);
    EXPECT_EQ(a.counters().commands_accepted, 3u); // two subscription snapshots, then the command
    EXPECT_EQ(a.counters().commands_stale + a.counters().commands_replayed, 0u);
    ASSERT_FALSE(actuator.calls.empty());
    EXPECT_EQ(actuator.calls.back(), (std::pair<std::string, bool>{"led2", true}));
    const auto tree = s.server.snapshot();
    const auto temp = tree->get(*datatree::Path::parse("/sensors/temperature"));
    ASSERT_TRUE(temp && temp->is_number());
    EXPECT_NEAR(temp->as_number(), 23.2, 1e-9);
    EXPECT_EQ(tree->get(*datatree::Path::parse("/metadata/ack/led2/revision")).value_or(datatree::Value(0)),
              datatree::Value(static_cast<double>(command_revision)));
    EXPECT_EQ(tree->get(*datatree::Path::parse("/metadata/status/led2")), datatree::Value(true));
}
