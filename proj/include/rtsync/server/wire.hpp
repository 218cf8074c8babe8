#pragma once

#include "rtsync/datatree/value.hpp"
#include "rtsync/result.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace rtsync::server {

using datatree::Value;

enum class ErrCode {
    AuthRequired,
    Denied,
    BadPath,
    OverlappingPaths,
    UnknownSub,
    Malformed,
};

const char* to_string(ErrCode c);
std::optional<ErrCode> err_code_from_string(std::string_view s);

// Client -> server
struct Auth {
    std::string token;
    friend bool operator==(const Auth&, const Auth&) = default;
};
struct Put {
    std::string path;
    std::optional<Value> value; // null deletes
    std::int64_t client_time_ms = 0;
    friend bool operator==(const Put&, const Put&) = default;
};
struct UpdateOp {
    std::string path;
    std::optional<Value> value; // null deletes
    friend bool operator==(const UpdateOp&, const UpdateOp&) = default;
};
struct Update {
    std::vector<UpdateOp> ops;
    friend bool operator==(const Update&, const Update&) = default;
};
struct Get {
    std::string path;
    friend bool operator==(const Get&, const Get&) = default;
};
struct Subscribe {
    std::string path;
    friend bool operator==(const Subscribe&, const Subscribe&) = default;
};
struct Unsubscribe {
    std::uint64_t sub_id = 0;
    friend bool operator==(const Unsubscribe&, const Unsubscribe&) = default;
};
struct Ping {
    friend bool operator==(const Ping&, const Ping&) = default;
};

// Server -> client
struct Event {
    std::uint64_t sub_id = 0;
    std::uint64_t revision = 0;
    std::string path;
    std::optional<Value> value; // absent when the subtree was removed
    std::int64_t server_time_ms = 0;
    friend bool operator==(const Event&, const Event&) = default;
};
struct Ack {
    std::uint64_t msg_id = 0;
    std::optional<std::uint64_t> revision;
    std::int64_t server_time_ms = 0;
    std::optional<std::uint64_t> sub_id; // SUBSCRIBE replies
    std::optional<Value> value;          // GET replies (absent if nothing stored)
    friend bool operator==(const Ack&, const Ack&) = default;
};
struct Err {
    std::uint64_t msg_id = 0;
    ErrCode code = ErrCode::Malformed;
    std::string reason;
    friend bool operator==(const Err&, const Err&) = default;
};
struct Pong {
    std::uint64_t msg_id = 0;
    std::int64_t server_time_ms = 0;
    friend bool operator==(const Pong&, const Pong&) = default;
};

using Body = std::variant<Auth, Put, Update, Get, Subscribe, Unsubscribe, Ping, Event, Ack, Err, Pong>;

// One frame of the newline-delimited protocol. msg_id is chosen by the
// sender; replies reference the request's msg_id in their payload.
struct WireMessage {
    std::uint64_t msg_id = 0;
    Body body;

    template <typename T>
    const T* as() const noexcept {
        return std::get_if<T>(&body);
    }
    template <typename T>
    bool is() const noexcept {
        return std::holds_alternative<T>(body);
    }
    bool client_initiated() const noexcept { return body.index() <= 6; }

    friend bool operator==(const WireMessage&, const WireMessage&) = default;
};

const char* kind_name(const WireMessage& m);

struct DecodeError {
    std::uint64_t msg_id = 0; // best effort; 0 when not recoverable
    std::string reason;
};

// One frame, without the trailing newline. Keys are emitted in sorted order.
std::string encode(const WireMessage& m);
Result<WireMessage, DecodeError> decode(std::string_view frame);

} // namespace rtsync::server
