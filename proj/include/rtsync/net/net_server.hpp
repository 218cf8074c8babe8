#pragma once

#include "rtsync/datatree/tree.hpp"
#include "rtsync/net/endpoint.hpp"
#include "rtsync/net/server_config.hpp"
#include "rtsync/server/server.hpp"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>

namespace rtsync::net {

struct NetServerOptions {
    Endpoint listen{Scheme::Tcp, "127.0.0.1", 7070};
    std::optional<Endpoint> ws_listen; // same frames, one per WebSocket text message
    server::ServerConfig config;
    datatree::Tree seed; // used only when data_dir holds no prior state
    std::optional<std::filesystem::path> data_dir;
    std::size_t checkpoint_every = 1000;
    std::int64_t expiry_interval_ms = 1000;
    std::size_t max_frame_bytes = 1 << 20;
};

// Builds options from a config file: ruleset, tokens and seed are loaded here.
NetServerOptions options_from_config(const ServerFileConfig& file);

// Serves the wire protocol over TCP and, optionally, WebSocket. All sessions
// and the core server live on one I/O thread, so commits and fan-out are
// serialized without locks.
class NetServer {
public:
    explicit NetServer(NetServerOptions options);
    ~NetServer();

    NetServer(const NetServer&) = delete;
    NetServer& operator=(const NetServer&) = delete;

    // Recovers persisted state, binds both listeners and starts the I/O
    // thread. Port 0 binds an ephemeral port. Throws on bind or recovery errors.
    void start();
    void stop();
    // Blocks until stop() is called from another thread or a signal handler.
    void wait();

    std::uint16_t port() const;
    std::optional<std::uint16_t> ws_port() const;
    std::shared_ptr<const datatree::Tree> snapshot() const;
    std::size_t session_count() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace rtsync::net
