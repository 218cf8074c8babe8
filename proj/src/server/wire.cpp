#include "rtsync/server/wire.hpp"

#include "rtsync/datatree/json_value.hpp"

#include <json.hpp>

namespace rtsync::server {

using json = nlohmann::json;
using datatree::to_json;
using datatree::value_from_json;

const char* to_string(ErrCode c) {
    switch (c) {
    case ErrCode::AuthRequired: return "AUTH_REQUIRED";
    case ErrCode::Denied: return "DENIED";
    case ErrCode::BadPath: return "BAD_PATH";
    case ErrCode::OverlappingPaths: return "OVERLAPPING_PATHS";
    case ErrCode::UnknownSub: return "UNKNOWN_SUB";
    case ErrCode::Malformed: return "MALFORMED";
    }
    return "MALFORMED";
}

std::optional<ErrCode> err_code_from_string(std::string_view s) {
    for (auto c : {ErrCode::AuthRequired, ErrCode::Denied, ErrCode::BadPath, ErrCode::OverlappingPaths,
                   ErrCode::UnknownSub, ErrCode::Malformed}) {
        if (s == to_string(c)) {
            return c;
        }
    }
    return std::nullopt;
}

namespace {

struct KindNamer {
    const char* operator()(const Auth&) const { return "AUTH"; }
    const char* operator()(const Put&) const { return "PUT"; }
    const char* operator()(const Update&) const { return "UPDATE"; }
    const char* operator()(const Get&) const { return "GET"; }
    const char* operator()(const Subscribe&) const { return "SUBSCRIBE"; }
    const char* operator()(const Unsubscribe&) const { return "UNSUBSCRIBE"; }
    const char* operator()(const Ping&) const { return "PING"; }
    const char* operator()(const Event&) const { return "EVENT"; }
    const char* operator()(const Ack&) const { return "ACK"; }
    const char* operator()(const Err&) const { return "ERR"; }
    const char* operator()(const Pong&) const { return "PONG"; }
};

json optional_value(const std::optional<Value>& v) {
    return v ? to_json(*v) : json(nullptr);
}

struct Encoder {
    json& j;
    void operator()(const Auth& m) const { j["token"] = m.token; }
    void operator()(const Put& m) const {
        j["path"] = m.path;
        j["value"] = optional_value(m.value);
        j["client_time_ms"] = m.client_time_ms;
    }
    void operator()(const Update& m) const {
        json ops = json::array();
        for (const auto& op : m.ops) {
            ops.push_back(json{{"path", op.path}, {"value", optional_value(op.value)}});
        }
        j["ops"] = std::move(ops);
    }
    void operator()(const Get& m) const { j["path"] = m.path; }
    void operator()(const Subscribe& m) const { j["path"] = m.path; }
    void operator()(const Unsubscribe& m) const { j["sub_id"] = m.sub_id; }
    void operator()(const Ping&) const {}
    void operator()(const Event& m) const {
        j["sub_id"] = m.sub_id;
        j["revision"] = m.revision;
        j["path"] = m.path;
        j["value"] = optional_value(m.value);
        j["server_time_ms"] = m.server_time_ms;
    }
    void operator()(const Ack& m) const {
        j["msg_id"] = m.msg_id;
        if (m.revision) j["revision"] = *m.revision;
        j["server_time_ms"] = m.server_time_ms;
        if (m.sub_id) j["sub_id"] = *m.sub_id;
        if (m.value) j["value"] = to_json(*m.value);
    }
    void operator()(const Err& m) const {
        j["msg_id"] = m.msg_id;
        j["code"] = to_string(m.code);
        j["reason"] = m.reason;
    }
    void operator()(const Pong& m) const {
        j["msg_id"] = m.msg_id;
        j["server_time_ms"] = m.server_time_ms;
    }
};

struct BadFrame {
    std::string reason;
};

const json& field(const json& j, const char* name) {
    const auto it = j.find(name);
    if (it == j.end()) {
        throw BadFrame{std::string("missing field '") + name + "'"};
    }
    return *it;
}

std::string get_string(const json& j, const char* name) {
    const auto& f = field(j, name);
    if (!f.is_string()) {
        throw BadFrame{std::string("field '") + name + "' must be a string"};
    }
    return f.get<std::string>();
}

std::uint64_t get_unsigned(const json& j, const char* name) {
    const auto& f = field(j, name);
    if (!f.is_number_unsigned() && !(f.is_number_integer() && f.get<std::int64_t>() >= 0)) {
        throw BadFrame{std::string("field '") + name + "' must be a non-negative integer"};
    }
    return f.get<std::uint64_t>();
}

std::int64_t get_int(const json& j, const char* name, std::int64_t fallback) {
    const auto it = j.find(name);
    if (it == j.end()) {
        return fallback;
    }
    if (!it->is_number_integer()) {
        throw BadFrame{std::string("field '") + name + "' must be an integer"};
    }
    return it->get<std::int64_t>();
}

std::optional<Value> get_optional_value(const json& j, const char* name) {
    const auto it = j.find(name);
    if (it == j.end() || it->is_null()) {
        return std::nullopt;
    }
    auto v = value_from_json(*it);
    if (!v) {
        throw BadFrame{std::string("field '") + name + "': " + v.error()};
    }
    return std::move(v).value();
}

Body decode_body(const std::string& kind, const json& j) {
    if (kind == "AUTH") return Auth{get_string(j, "token")};
    if (kind == "PUT") {
        field(j, "value");
        return Put{get_string(j, "path"), get_optional_value(j, "value"), get_int(j, "client_time_ms", 0)};
    }
    if (kind == "UPDATE") {
        const auto& ops = field(j, "ops");
        if (!ops.is_array()) {
            throw BadFrame{"field 'ops' must be an array"};
        }
        Update u;
        for (const auto& op : ops) {
            if (!op.is_object()) {
                throw BadFrame{"update op must be an object"};
            }
            field(op, "value");
            u.ops.push_back(UpdateOp{get_string(op, "path"), get_optional_value(op, "value")});
        }
        return u;
    }
    if (kind == "GET") return Get{get_string(j, "path")};
    if (kind == "SUBSCRIBE") return Subscribe{get_string(j, "path")};
    if (kind == "UNSUBSCRIBE") return Unsubscribe{get_unsigned(j, "sub_id")};
    if (kind == "PING") return Ping{};
    if (kind == "EVENT") {
        return Event{get_unsigned(j, "sub_id"), get_unsigned(j, "revision"), get_string(j, "path"),
                     get_optional_value(j, "value"), get_int(j, "server_time_ms", 0)};
    }
    if (kind == "ACK") {
        Ack a;
        a.msg_id = get_unsigned(j, "msg_id");
        if (j.contains("revision")) a.revision = get_unsigned(j, "revision");
        a.server_time_ms = get_int(j, "server_time_ms", 0);
        if (j.contains("sub_id")) a.sub_id = get_unsigned(j, "sub_id");
        a.value = get_optional_value(j, "value");
        return a;
    }
    if (kind == "ERR") {
        const auto code = err_code_from_string(get_string(j, "code"));
        if (!code) {
            throw BadFrame{"unknown error code"};
        }
        return Err{get_unsigned(j, "msg_id"), *code, j.value("reason", std::string())};
    }
    if (kind == "PONG") return Pong{get_unsigned(j, "msg_id"), get_int(j, "server_time_ms", 0)};
    throw BadFrame{"unknown kind '" + kind + "'"};
}

} // namespace

const char* kind_name(const WireMessage& m) {
    return std::visit(KindNamer{}, m.body);
}

std::string encode(const WireMessage& m) {
    json j = json::object();
    j["id"] = m.msg_id;
    j["kind"] = kind_name(m);
    std::visit(Encoder{j}, m.body);
    return j.dump();
}

Result<WireMessage, DecodeError> decode(std::string_view frame) {
    json j = json::parse(frame, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
        return fail(DecodeError{0, "frame is not a JSON object"});
    }
    std::uint64_t id = 0;
    try {
        id = get_unsigned(j, "id");
        const auto kind = get_string(j, "kind");
        return WireMessage{id, decode_body(kind, j)};
    } catch (const BadFrame& bad) {
        return fail(DecodeError{id, bad.reason});
    } catch (const json::exception& e) {
        return fail(DecodeError{id, e.what()});
    }
}

} // namespace rtsync::server
