#pragma once

#include "rtsync/result.hpp"

#include <cstdint>
#include <string>
#include <string_view>

namespace rtsync::net {

enum class Scheme {
    Tcp,       // newline-delimited frames
    WebSocket, // one frame per text message
};

struct Endpoint {
    Scheme scheme = Scheme::Tcp;
    std::string host;
    std::uint16_t port = 0;
    std::string target = "/"; // WebSocket request target

    std::string to_string() const;
};

// Accepts "host:port", "tcp://host:port" and "ws://host:port[/target]".
Result<Endpoint, std::string> parse_endpoint(std::string_view text);

} // namespace rtsync::net
