#include "rtsync/net/client.hpp"

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

namespace rtsync::net {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;
using std::chrono::milliseconds;

namespace {

ClientError transport_error(const std::string& what, const boost::system::error_code& ec) {
    return {ClientErrorKind::Transport, what + ": " + ec.message()};
}

// Runs the context until `done` or the deadline; on timeout the pending
// operation is cancelled through `cancel` and drained.
template <typename Cancel>
bool run_until(asio::io_context& io, const bool& done, milliseconds timeout, Cancel cancel) {
    io.restart();
    io.run_for(timeout);
    if (done) {
        return true;
    }
    cancel();
    io.restart();
    io.run();
    return false;
}

Result<tcp::socket, ClientError> connect_socket(asio::io_context& io, const Endpoint& ep, milliseconds timeout) {
    tcp::resolver resolver(io);
    boost::system::error_code ec;
    const auto results = resolver.resolve(ep.host, std::to_string(ep.port), ec);
    if (ec) {
        return fail(transport_error("resolve " + ep.host, ec));
    }
    tcp::socket socket(io);
    bool done = false;
    boost::system::error_code result;
    asio::async_connect(socket, results, [&](const boost::system::error_code& e, const tcp::endpoint&) {
        result = e;
        done = true;
    });
    if (!run_until(io, done, timeout, [&] { socket.close(); })) {
        return fail(ClientError{ClientErrorKind::Timeout, "connect to " + ep.to_string() + " timed out"});
    }
    if (result) {
        return fail(transport_error("connect to " + ep.to_string(), result));
    }
    socket.set_option(tcp::no_delay(true));
    return socket;
}

// A read that outlives a timed-out call: the next read() resumes waiting for
// it rather than cancelling, which WebSocket streams do not survive.
struct PendingRead {
    bool active = false;
    bool done = false;
    boost::system::error_code result;
    std::size_t bytes = 0;

    void start() {
        active = true;
        done = false;
    }
    void complete(const boost::system::error_code& e, std::size_t n) {
        result = e;
        bytes = n;
        done = true;
    }
    // True once the read has completed; the slot is then free again.
    bool wait(asio::io_context& io, milliseconds timeout) {
        if (!done) {
            io.restart();
            io.run_for(timeout);
        }
        if (done) {
            active = false;
        }
        return done;
    }
};

class TcpChannel : public FrameChannel {
public:
    TcpChannel(std::unique_ptr<asio::io_context> io, tcp::socket socket)
        : io_(std::move(io)), socket_(std::move(socket)) {}

    Result<bool, ClientError> write(const std::string& frame) override {
        if (!socket_.is_open()) {
            return fail(ClientError{ClientErrorKind::Transport, "connection closed"});
        }
        boost::system::error_code ec;
        const std::string line = frame + "\n";
        asio::write(socket_, asio::buffer(line), ec);
        if (ec) {
            close();
            return fail(transport_error("write", ec));
        }
        return true;
    }

    Result<std::optional<std::string>, ClientError> read(milliseconds timeout) override {
        if (!socket_.is_open()) {
            return fail(ClientError{ClientErrorKind::Transport, "connection closed"});
        }
        if (!pending_.active) {
            pending_.start();
            asio::async_read_until(socket_, buffer_, '\n', [this](const boost::system::error_code& e, std::size_t n) {
                pending_.complete(e, n);
            });
        }
        if (!pending_.wait(*io_, timeout)) {
            return std::optional<std::string>();
        }
        if (pending_.result) {
            close();
            return fail(transport_error("read", pending_.result));
        }
        const auto n = pending_.bytes;
        std::string line(asio::buffers_begin(buffer_.data()), asio::buffers_begin(buffer_.data()) + n - 1);
        buffer_.consume(n);
        return std::optional<std::string>(std::move(line));
    }

    void close() override {
        boost::system::error_code ignored;
        socket_.shutdown(tcp::socket::shutdown_both, ignored);
        socket_.close(ignored);
    }
    bool is_open() const override { return socket_.is_open(); }

private:
    std::unique_ptr<asio::io_context> io_;
    tcp::socket socket_;
    asio::streambuf buffer_;
    PendingRead pending_;
};

class WsChannel : public FrameChannel {
public:
    WsChannel(std::unique_ptr<asio::io_context> io, websocket::stream<tcp::socket> ws)
        : io_(std::move(io)), ws_(std::move(ws)) {}

    Result<bool, ClientError> write(const std::string& frame) override {
        if (!is_open()) {
            return fail(ClientError{ClientErrorKind::Transport, "connection closed"});
        }
        boost::system::error_code ec;
        ws_.text(true);
        ws_.write(asio::buffer(frame), ec);
        if (ec) {
            close();
            return fail(transport_error("write", ec));
        }
        return true;
    }

    Result<std::optional<std::string>, ClientError> read(milliseconds timeout) override {
        if (!is_open()) {
            return fail(ClientError{ClientErrorKind::Transport, "connection closed"});
        }
        if (!pending_.active) {
            pending_.start();
            ws_.async_read(buffer_, [this](const boost::system::error_code& e, std::size_t n) {
                pending_.complete(e, n);
            });
        }
        if (!pending_.wait(*io_, timeout)) {
            return std::optional<std::string>();
        }
        if (pending_.result) {
            close();
            return fail(transport_error("read", pending_.result));
        }
        auto frame = beast::buffers_to_string(buffer_.data());
        buffer_.consume(buffer_.size());
        return std::optional<std::string>(std::move(frame));
    }

    void close() override {
        boost::system::error_code ignored;
        beast::get_lowest_layer(ws_).shutdown(tcp::socket::shutdown_both, ignored);
        beast::get_lowest_layer(ws_).close(ignored);
    }
    bool is_open() const override { return beast::get_lowest_layer(ws_).is_open(); }

private:
    std::unique_ptr<asio::io_context> io_;
    websocket::stream<tcp::socket> ws_;
    beast::flat_buffer buffer_;
    PendingRead pending_;
};

} // namespace

Result<std::unique_ptr<FrameChannel>, ClientError> open_channel(const Endpoint& ep, milliseconds timeout) {
    auto io = std::make_unique<asio::io_context>();
    auto socket = connect_socket(*io, ep, timeout);
    if (!socket) {
        return fail(socket.error());
    }
    if (ep.scheme == Scheme::Tcp) {
        return std::unique_ptr<FrameChannel>(std::make_unique<TcpChannel>(std::move(io), std::move(socket).value()));
    }
    websocket::stream<tcp::socket> ws(std::move(socket).value());
    bool done = false;
    boost::system::error_code result;
    ws.async_handshake(ep.host, ep.target, [&](const boost::system::error_code& e) {
        result = e;
        done = true;
    });
    if (!run_until(*io, done, timeout, [&] { beast::get_lowest_layer(ws).close(); })) {
        return fail(ClientError{ClientErrorKind::Timeout, "WebSocket handshake timed out"});
    }
    if (result) {
        return fail(transport_error("WebSocket handshake", result));
    }
    return std::unique_ptr<FrameChannel>(std::make_unique<WsChannel>(std::move(io), std::move(ws)));
}

std::optional<std::uint64_t> reply_to(const server::WireMessage& m) {
    if (const auto* a = m.as<server::Ack>()) {
        return a->msg_id;
    }
    if (const auto* e = m.as<server::Err>()) {
        return e->msg_id;
    }
    if (const auto* p = m.as<server::Pong>()) {
        return p->msg_id;
    }
    return std::nullopt;
}

Result<Client, ClientError> Client::connect(const Endpoint& ep, milliseconds timeout) {
    auto channel = open_channel(ep, timeout);
    if (!channel) {
        return fail(channel.error());
    }
    return Client(std::move(channel).value());
}

Result<std::uint64_t, ClientError> Client::send(server::Body body) {
    const server::WireMessage msg{next_msg_id_++, std::move(body)};
    auto written = channel_->write(server::encode(msg));
    if (!written) {
        return fail(written.error());
    }
    return msg.msg_id;
}

Result<std::optional<server::WireMessage>, ClientError> Client::read_one(milliseconds timeout) {
    auto frame = channel_->read(timeout);
    if (!frame) {
        return fail(frame.error());
    }
    if (!*frame) {
        return std::optional<server::WireMessage>();
    }
    auto msg = server::decode(**frame);
    if (!msg) {
        return fail(ClientError{ClientErrorKind::Malformed, msg.error().reason});
    }
    return std::optional<server::WireMessage>(std::move(msg).value());
}

Result<server::WireMessage, ClientError> Client::request(server::Body body, milliseconds timeout) {
    auto id = send(std::move(body));
    if (!id) {
        return fail(id.error());
    }
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    while (true) {
        const auto left = std::chrono::duration_cast<milliseconds>(deadline - std::chrono::steady_clock::now());
        if (left.count() <= 0) {
            return fail(ClientError{ClientErrorKind::Timeout, "no reply to msg_id " + std::to_string(*id)});
        }
        auto msg = read_one(left);
        if (!msg) {
            return fail(msg.error());
        }
        if (!*msg) {
            continue;
        }
        if (reply_to(**msg) == *id) {
            return std::move(**msg);
        }
        backlog_.push_back(std::move(**msg));
    }
}

Result<std::optional<server::WireMessage>, ClientError> Client::next_message(milliseconds timeout) {
    if (!backlog_.empty()) {
        auto m = std::move(backlog_.front());
        backlog_.pop_front();
        return std::optional<server::WireMessage>(std::move(m));
    }
    return read_one(timeout);
}

} // namespace rtsync::net
