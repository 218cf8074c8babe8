#include "rtsync/net/endpoint.hpp"

#include <charconv>

namespace rtsync::net {

std::string Endpoint::to_string() const {
    const auto hostport = host + ":" + std::to_string(port);
    return scheme == Scheme::WebSocket ? "ws://" + hostport + target : hostport;
}

Result<Endpoint, std::string> parse_endpoint(std::string_view text) {
    Endpoint ep;
    std::string_view rest = text;
    if (rest.starts_with("ws://")) {
        ep.scheme = Scheme::WebSocket;
        rest.remove_prefix(5);
    } else if (rest.starts_with("tcp://")) {
        rest.remove_prefix(6);
    }
    if (const auto slash = rest.find('/'); slash != std::string_view::npos) {
        if (ep.scheme != Scheme::WebSocket) {
            return fail(std::string("a path is only allowed for ws:// endpoints: ") + std::string(text));
        }
        ep.target = std::string(rest.substr(slash));
        rest = rest.substr(0, slash);
    }
    const auto colon = rest.rfind(':');
    if (colon == std::string_view::npos || colon == 0) {
        return fail("expected host:port, got '" + std::string(text) + "'");
    }
    ep.host = std::string(rest.substr(0, colon));
    const auto port_text = rest.substr(colon + 1);
    unsigned port = 0;
    const auto [ptr, ec] = std::from_chars(port_text.data(), port_text.data() + port_text.size(), port);
    if (ec != std::errc() || ptr != port_text.data() + port_text.size() || port > 65535) {
        return fail("bad port in '" + std::string(text) + "'");
    }
    ep.port = static_cast<std::uint16_t>(port);
    return ep;
}

} // namespace rtsync::net
