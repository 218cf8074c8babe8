#pragma once

#include "rtsync/net/endpoint.hpp"
#include "rtsync/result.hpp"
#include "rtsync/server/wire.hpp"

#include <chrono>
#include <cstdint>
#include <deque>
#include <memory>
#include <optional>
#include <string>

namespace rtsync::net {

enum class ClientErrorKind {
    Transport, // connect, read or write failed; the connection is closed
    Timeout,
    Malformed, // the peer sent something that is not a wire frame
};

struct ClientError {
    ClientErrorKind kind = ClientErrorKind::Transport;
    std::string detail;
};

// A bidirectional stream of encoded frames (without trailing newlines).
class FrameChannel {
public:
    virtual ~FrameChannel() = default;
    virtual Result<bool, ClientError> write(const std::string& frame) = 0;
    // nullopt on timeout.
    virtual Result<std::optional<std::string>, ClientError> read(std::chrono::milliseconds timeout) = 0;
    virtual void close() = 0;
    virtual bool is_open() const = 0;
};

Result<std::unique_ptr<FrameChannel>, ClientError> open_channel(const Endpoint& ep,
                                                                std::chrono::milliseconds timeout);

// Synchronous protocol client. Replies are matched to requests by msg_id;
// EVENTs and other unsolicited frames that arrive meanwhile are kept, in
// order, for next_message().
class Client {
public:
    static Result<Client, ClientError> connect(const Endpoint& ep,
                                               std::chrono::milliseconds timeout = std::chrono::seconds(5));
    explicit Client(std::unique_ptr<FrameChannel> channel) : channel_(std::move(channel)) {}

    // Sends and returns the msg_id used.
    Result<std::uint64_t, ClientError> send(server::Body body);
    // Sends and waits for the ACK, ERR or PONG that answers it.
    Result<server::WireMessage, ClientError> request(server::Body body,
                                                     std::chrono::milliseconds timeout = std::chrono::seconds(5));
    // Next frame not consumed by request(); nullopt on timeout.
    Result<std::optional<server::WireMessage>, ClientError> next_message(std::chrono::milliseconds timeout);

    void close() { channel_->close(); }
    bool is_open() const { return channel_->is_open(); }

private:
    Result<std::optional<server::WireMessage>, ClientError> read_one(std::chrono::milliseconds timeout);

    std::unique_ptr<FrameChannel> channel_;
    std::uint64_t next_msg_id_ = 1;
    std::deque<server::WireMessage> backlog_;
};

// msg_id of the request a reply answers, or nullopt for unsolicited frames.
std::optional<std::uint64_t> reply_to(const server::WireMessage& m);

} // namespace rtsync::net
