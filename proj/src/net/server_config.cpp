#include "rtsync/net/server_config.hpp"

#include <fstream>

namespace rtsync::net {

using nlohmann::json;

namespace {

json read_json_file(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) {
        throw ConfigError("cannot read " + file.string());
    }
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(file.string() + ": " + e.what());
    }
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& name) {
    const std::filesystem::path p(name);
    return p.is_absolute() || base.empty() ? p : base / p;
}

} // namespace

ServerFileConfig server_config_from_json(const json& j, const std::filesystem::path& base_dir) {
    if (!j.is_object()) {
        throw ConfigError("server config must be a JSON object");
    }
    ServerFileConfig c;
    try {
        for (const auto& [key, v] : j.items()) {
            if (key == "listen") {
                c.listen = v.get<std::string>();
            } else if (key == "ws_listen") {
                c.ws_listen = v.is_null() ? std::nullopt : std::optional(v.get<std::string>());
            } else if (key == "heartbeat_timeout_ms") {
                c.heartbeat_timeout_ms = v.get<std::int64_t>();
            } else if (key == "rules") {
                c.rules = resolve(base_dir, v.get<std::string>());
            } else if (key == "tokens") {
                c.tokens = resolve(base_dir, v.get<std::string>());
            } else if (key == "seed") {
                c.seed = resolve(base_dir, v.get<std::string>());
            } else if (key == "data_dir") {
                c.data_dir = resolve(base_dir, v.get<std::string>());
            } else if (key == "checkpoint_every") {
                c.checkpoint_every = v.get<std::size_t>();
            } else {
                throw ConfigError("unknown server config key '" + key + "'");
            }
        }
    } catch (const json::type_error& e) {
        throw ConfigError(std::string("server config: ") + e.what());
    }
    if (c.heartbeat_timeout_ms <= 0) {
        throw ConfigError("heartbeat_timeout_ms must be positive");
    }
    return c;
}

ServerFileConfig load_server_config(const std::filesystem::path& file) {
    return server_config_from_json(read_json_file(file), file.parent_path());
}

TokenTable tokens_from_json(const json& j) {
    if (!j.is_object()) {
        throw ConfigError("token file must be a JSON object");
    }
    TokenTable out;
    for (const auto& [token, grant] : j.items()) {
        if (token.empty() || !grant.is_object() || !grant.contains("principal") || !grant["principal"].is_string()) {
            throw ConfigError("token entries need a non-empty token and a string principal");
        }
        server::TokenGrant g;
        g.principal = grant["principal"].get<std::string>();
        const auto kind = grant.value("kind", std::string("user"));
        if (kind == "device") {
            g.kind = rules::PrincipalKind::Device;
        } else if (kind == "user") {
            g.kind = rules::PrincipalKind::User;
        } else {
            throw ConfigError("unknown principal kind '" + kind + "'");
        }
        out.emplace(token, std::move(g));
    }
    return out;
}

TokenTable load_tokens(const std::filesystem::path& file) {
    return tokens_from_json(read_json_file(file));
}

} // namespace rtsync::net
