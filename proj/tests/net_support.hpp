#pragma once

#include "rtsync/net/client.hpp"
#include "rtsync/net/net_server.hpp"
#include "rtsync/server/seed.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>


#include <filesystem>
#include <memory>
#include <optional>
#include <string>

namespace rtsync::testing {

using oracle::TempDir;

inline net::NetServerOptions loopback_options(std::optional<std::filesystem::path> data_dir = std::nullopt) {
    net::NetServerOptions o;
    o.listen = net::Endpoint{net::Scheme::Tcp, "127.0.0.1", 0};
    o.ws_listen = net::Endpoint{net::Scheme::WebSocket, "127.0.0.1", 0};
    o.seed = server::example_document();
    o.config.tokens = {{"device-secret", {"ESP32_001", rules::PrincipalKind::Device}},
                       {"dashboard-secret", {"dashboard", rules::PrincipalKind::User}}};
    o.data_dir = std::move(data_dir);
    o.checkpoint_every = 1000;
    return o;
}

// A started server on ephemeral ports.
struct LiveServer {
    explicit LiveServer(net::NetServerOptions o = loopback_options()) : server(std::move(o)) { server.start(); }
    ~LiveServer() { server.stop(); }

    net::Endpoint tcp() const { return {net::Scheme::Tcp, "127.0.0.1", server.port()}; }
    net::Endpoint ws() const { return {net::Scheme::WebSocket, "127.0.0.1", *server.ws_port()}; }
    std::string tcp_address() const { return "127.0.0.1:" + std::to_string(server.port()); }
    std::string ws_address() const { return "ws://127.0.0.1:" + std::to_string(*server.ws_port()) + "/"; }

    net::NetServer server;
};

inline net::Client login(const net::Endpoint& ep, const std::string& token = "dashboard-secret") {
    auto c = net::Client::connect(ep);
    EXPECT_TRUE(c) << (c ? "" : c.error().detail);
    auto reply = c->request(server::Auth{token});
    EXPECT_TRUE(reply && reply->is<server::Ack>());
    return std::move(c).value();
}

} // namespace rtsync::testing
