#pragma once

#include "rtsync/server/server.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>

namespace rtsync::net {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// On-disk server settings. Relative file names are resolved against the
// directory of the config file.
struct ServerFileConfig {
    std::string listen = "127.0.0.1:7070";
    std::optional<std::string> ws_listen = "127.0.0.1:7071";
    std::int64_t heartbeat_timeout_ms = 15'000;
    std::optional<std::filesystem::path> rules;  // default ruleset when absent
    std::optional<std::filesystem::path> tokens; // no tokens: nobody can authenticate
    std::optional<std::filesystem::path> seed;   // example document when absent
    std::optional<std::filesystem::path> data_dir; // no persistence when absent
    std::size_t checkpoint_every = 1000;
};

ServerFileConfig server_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
ServerFileConfig load_server_config(const std::filesystem::path& file);

using TokenTable = std::map<std::string, server::TokenGrant, std::less<>>;

// {"<token>": {"principal": "...", "kind": "device" | "user"}}
TokenTable tokens_from_json(const nlohmann::json& j);
TokenTable load_tokens(const std::filesystem::path& file);

} // namespace rtsync::net
