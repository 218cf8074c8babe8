#include "rtsync/net/net_server.hpp"

#include "rtsync/datatree/snapshot.hpp"
#include "rtsync/rules/ruleset_file.hpp"
#include "rtsync/server/persistence.hpp"
#include "rtsync/server/seed.hpp"

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include <atomic>
#include <chrono>
#include <deque>
#include <fstream>
#include <future>
#include <iostream>
#include <map>
#include <sstream>
#include <thread>

namespace rtsync::net {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;
using server::SessionId;

NetServerOptions options_from_config(const ServerFileConfig& file) {
    NetServerOptions o;
    auto listen = parse_endpoint(file.listen);
    if (!listen) {
        throw ConfigError("listen: " + listen.error());
    }
    o.listen = *listen;
    if (file.ws_listen) {
        auto ws = parse_endpoint(*file.ws_listen);
        if (!ws) {
            throw ConfigError("ws_listen: " + ws.error());
        }
        o.ws_listen = *ws;
    }
    o.config.heartbeat_timeout_ms = file.heartbeat_timeout_ms;
    if (file.rules) {
        o.config.rules = rules::load_ruleset(*file.rules);
    }
    if (file.tokens) {
        o.config.tokens = load_tokens(*file.tokens);
    }
    if (file.seed) {
        std::ifstream in(*file.seed);
        if (!in) {
            throw ConfigError("cannot read " + file.seed->string());
        }
        std::stringstream ss;
        ss << in.rdbuf();
        auto tree = datatree::restore_snapshot(ss.str());
        if (!tree) {
            throw ConfigError(file.seed->string() + ": " + tree.error().detail);
        }
        o.seed = std::move(tree).value();
    } else {
        o.seed = server::example_document();
    }
    o.data_dir = file.data_dir;
    o.checkpoint_every = file.checkpoint_every;
    return o;
}

namespace {

std::int64_t wall_ms() {
    using namespace std::chrono;
    return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

// One client connection as seen by the dispatcher.
class Connection {
public:
    virtual ~Connection() = default;
    virtual void deliver(std::string frame) = 0;
    virtual void close() = 0;
};

// What connections need from the server side.
class SessionHub {
public:
    virtual ~SessionHub() = default;
    virtual SessionId open() = 0;
    virtual void attach(SessionId id, std::shared_ptr<Connection> c) = 0;
    virtual void incoming(SessionId id, std::string_view frame) = 0;
    virtual void closed(SessionId id) = 0;
};

} // namespace

struct NetServer::Impl : SessionHub {
    explicit Impl(NetServerOptions o) : options(std::move(o)), tcp_acceptor(io), ws_acceptor(io), expiry(io) {}

    NetServerOptions options;
    asio::io_context io;
    tcp::acceptor tcp_acceptor;
    tcp::acceptor ws_acceptor;
    asio::steady_timer expiry;
    std::unique_ptr<server::Server> core;
    std::unique_ptr<server::CommitLog> log;
    std::map<SessionId, std::shared_ptr<Connection>> connections;
    std::atomic<std::size_t> open_sessions{0};
    std::thread thread;
    std::uint16_t tcp_port = 0;
    std::optional<std::uint16_t> ws_port;
    std::promise<void> stopped;
    std::shared_future<void> stopped_future = stopped.get_future().share();
    bool running = false;

    SessionId open() override {
        const auto id = core->open_session(wall_ms());
        open_sessions = core->session_count();
        return id;
    }

    void attach(SessionId id, std::shared_ptr<Connection> c) override { connections[id] = std::move(c); }

    void incoming(SessionId id, std::string_view frame) override {
        if (!core->is_open(id)) {
            return;
        }
        dispatch(core->handle_frame(id, frame, wall_ms()));
    }

    void dispatch(const std::vector<server::Outbound>& out) {
        for (const auto& o : out) {
            const auto it = connections.find(o.to);
            if (it != connections.end()) {
                it->second->deliver(server::encode(o.msg));
            }
        }
    }

    void closed(SessionId id) override {
        connections.erase(id);
        core->close_session(id);
        open_sessions = core->session_count();
    }

    void schedule_expiry() {
        expiry.expires_after(std::chrono::milliseconds(options.expiry_interval_ms));
        expiry.async_wait([this](const boost::system::error_code& ec) {
            if (ec) {
                return;
            }
            for (const auto id : core->expire_sessions(wall_ms())) {
                const auto it = connections.find(id);
                if (it != connections.end()) {
                    auto c = it->second;
                    connections.erase(it);
                    c->close();
                }
            }
            open_sessions = core->session_count();
            schedule_expiry();
        });
    }

    void accept_tcp();
    void accept_ws();
};

namespace {

class TcpConnection : public Connection, public std::enable_shared_from_this<TcpConnection> {
public:
    TcpConnection(SessionHub& owner, tcp::socket socket, std::size_t max_frame)
        : owner_(owner), socket_(std::move(socket)), buffer_(max_frame) {}

    void begin(SessionId id) {
        id_ = id;
        read();
    }

    void deliver(std::string frame) override {
        frame.push_back('\n');
        queue_.push_back(std::move(frame));
        if (queue_.size() == 1) {
            write();
        }
    }

    void close() override {
        closed_ = true;
        boost::system::error_code ignored;
        socket_.shutdown(tcp::socket::shutdown_both, ignored);
        socket_.close(ignored);
    }

private:
    void read() {
        asio::async_read_until(socket_, buffer_, '\n',
                               [self = shared_from_this()](const boost::system::error_code& ec, std::size_t n) {
                                   self->on_read(ec, n);
                               });
    }

    void on_read(const boost::system::error_code& ec, std::size_t n) {
        if (ec) {
            finish();
            return;
        }
        std::string line(asio::buffers_begin(buffer_.data()), asio::buffers_begin(buffer_.data()) + n - 1);
        buffer_.consume(n);
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (!line.empty()) {
            owner_.incoming(id_, line);
        }
        if (!closed_) {
            read();
        }
    }

    void write() {
        asio::async_write(socket_, asio::buffer(queue_.front()),
                          [self = shared_from_this()](const boost::system::error_code& ec, std::size_t) {
                              if (ec) {
                                  self->finish();
                                  return;
                              }
                              self->queue_.pop_front();
                              if (!self->queue_.empty()) {
                                  self->write();
                              }
                          });
    }

    void finish() {
        if (!finished_) {
            finished_ = true;
            owner_.closed(id_);
            close();
        }
    }

    SessionHub& owner_;
    tcp::socket socket_;
    asio::streambuf buffer_;
    std::deque<std::string> queue_;
    SessionId id_ = 0;
    bool closed_ = false;
    bool finished_ = false;
};

class WsConnection : public Connection, public std::enable_shared_from_this<WsConnection> {
public:
    WsConnection(SessionHub& owner, tcp::socket socket, std::size_t max_frame)
        : owner_(owner), ws_(std::move(socket)) {
        ws_.read_message_max(max_frame);
        ws_.text(true);
    }

    void begin() {
        ws_.async_accept([self = shared_from_this()](const boost::system::error_code& ec) {
            if (ec) {
                return; // failed handshake: no session was opened
            }
            self->id_ = self->owner_.open();
            self->owner_.attach(self->id_, self);
            self->open_ = true;
            self->read();
        });
    }

    void deliver(std::string frame) override {
        queue_.push_back(std::move(frame));
        if (queue_.size() == 1) {
            write();
        }
    }

    void close() override {
        closed_ = true;
        boost::system::error_code ignored;
        beast::get_lowest_layer(ws_).shutdown(tcp::socket::shutdown_both, ignored);
        beast::get_lowest_layer(ws_).close(ignored);
    }

private:
    void read() {
        ws_.async_read(buffer_, [self = shared_from_this()](const boost::system::error_code& ec, std::size_t) {
            self->on_read(ec);
        });
    }

    void on_read(const boost::system::error_code& ec) {
        if (ec) {
            finish();
            return;
        }
        const auto frame = beast::buffers_to_string(buffer_.data());
        buffer_.consume(buffer_.size());
        owner_.incoming(id_, frame);
        if (!closed_) {
            read();
        }
    }

    void write() {
        ws_.async_write(asio::buffer(queue_.front()),
                        [self = shared_from_this()](const boost::system::error_code& ec, std::size_t) {
                            if (ec) {
                                self->finish();
                                return;
                            }
                            self->queue_.pop_front();
                            if (!self->queue_.empty()) {
                                self->write();
                            }
                        });
    }

    void finish() {
        if (open_ && !finished_) {
            finished_ = true;
            owner_.closed(id_);
            close();
        }
    }

    SessionHub& owner_;
    websocket::stream<tcp::socket> ws_;
    beast::flat_buffer buffer_;
    std::deque<std::string> queue_;
    SessionId id_ = 0;
    bool open_ = false;
    bool closed_ = false;
    bool finished_ = false;
};

void bind(tcp::acceptor& acceptor, asio::io_context& io, const Endpoint& ep) {
    tcp::resolver resolver(io);
    const auto results = resolver.resolve(ep.host, std::to_string(ep.port));
    const tcp::endpoint endpoint = *results.begin();
    acceptor.open(endpoint.protocol());
    acceptor.set_option(tcp::acceptor::reuse_address(true));
    acceptor.bind(endpoint);
    acceptor.listen();
}

} // namespace

void NetServer::Impl::accept_tcp() {
    tcp_acceptor.async_accept([this](const boost::system::error_code& ec, tcp::socket socket) {
        if (ec) {
            return; // acceptor closed
        }
        socket.set_option(tcp::no_delay(true));
        auto c = std::make_shared<TcpConnection>(*this, std::move(socket), options.max_frame_bytes);
        const auto id = open();
        attach(id, c);
        c->begin(id);
        accept_tcp();
    });
}

void NetServer::Impl::accept_ws() {
    ws_acceptor.async_accept([this](const boost::system::error_code& ec, tcp::socket socket) {
        if (ec) {
            return;
        }
        socket.set_option(tcp::no_delay(true));
        std::make_shared<WsConnection>(*this, std::move(socket), options.max_frame_bytes)->begin();
        accept_ws();
    });
}

NetServer::NetServer(NetServerOptions options) : impl_(std::make_unique<Impl>(std::move(options))) {}

NetServer::~NetServer() {
    stop();
}

void NetServer::start() {
    auto& m = *impl_;
    if (m.running) {
        return;
    }
    datatree::Tree initial = m.options.seed;
    if (m.options.data_dir) {
        const auto& dir = *m.options.data_dir;
        const bool fresh = !std::filesystem::exists(dir / server::CommitLog::kSnapshotFile) &&
                           !std::filesystem::exists(dir / server::CommitLog::kLogFile);
        if (!fresh) {
            auto recovered = server::CommitLog::recover(dir);
            if (!recovered) {
                throw std::runtime_error("recovery failed in " + dir.string() + ": " + recovered.error().detail);
            }
            initial = std::move(recovered->tree);
        }
        m.log = std::make_unique<server::CommitLog>(dir, m.options.checkpoint_every);
        // Also drops any torn record left by a crash, so appends start on a clean line.
        m.log->checkpoint(initial);
    }
    m.core = std::make_unique<server::Server>(m.options.config, std::move(initial));
    if (m.log) {
        m.core->set_commit_observer([&m](const server::CommitRecord& r, const datatree::Tree& t) {
            m.log->on_commit(r, t);
        });
    }

    bind(m.tcp_acceptor, m.io, m.options.listen);
    m.tcp_port = m.tcp_acceptor.local_endpoint().port();
    if (m.options.ws_listen) {
        bind(m.ws_acceptor, m.io, *m.options.ws_listen);
        m.ws_port = m.ws_acceptor.local_endpoint().port();
        m.accept_ws();
    }
    m.accept_tcp();
    m.schedule_expiry();
    m.running = true;
    m.thread = std::thread([&m] {
        m.io.run();
        m.stopped.set_value();
    });
}

void NetServer::stop() {
    auto& m = *impl_;
    if (!m.running) {
        return;
    }
    m.running = false;
    asio::post(m.io, [&m] {
        boost::system::error_code ignored;
        m.tcp_acceptor.close(ignored);
        m.ws_acceptor.close(ignored);
        m.expiry.cancel();
        auto conns = std::move(m.connections);
        for (auto& [id, c] : conns) {
            c->close();
        }
        m.io.stop();
    });
    if (m.thread.joinable()) {
        m.thread.join();
    }
}

void NetServer::wait() {
    impl_->stopped_future.wait();
}

std::uint16_t NetServer::port() const {
    return impl_->tcp_port;
}

std::optional<std::uint16_t> NetServer::ws_port() const {
    return impl_->ws_port;
}

std::shared_ptr<const datatree::Tree> NetServer::snapshot() const {
    return impl_->core->snapshot();
}

std::size_t NetServer::session_count() const {
    return impl_->open_sessions;
}

} // namespace rtsync::net
