#include "rtsync/server/server.hpp"

namespace rtsync::server {

using datatree::Path;
using datatree::WriteOp;

Server::Server(ServerConfig config, datatree::Tree initial)
    : config_(std::move(config)), store_(std::move(initial)) {}

SessionId Server::open_session(std::int64_t now_ms) {
    const SessionId id = next_session_++;
    SessionState s;
    s.id = id;
    s.last_seen_ms = now_ms;
    sessions_.emplace(id, std::move(s));
    return id;
}

void Server::close_session(SessionId id) {
    sessions_.erase(id);
}

const SessionState* Server::session(SessionId id) const {
    const auto it = sessions_.find(id);
    return it == sessions_.end() ? nullptr : &it->second;
}

WireMessage Server::reply(SessionState& s, Body body) {
    return WireMessage{s.next_out_id++, std::move(body)};
}

void Server::push_err(std::vector<Outbound>& out, SessionState& s, std::uint64_t msg_id, ErrCode code,
                      std::string reason) {
    out.push_back({s.id, reply(s, Err{msg_id, code, std::move(reason)})});
}

std::vector<SessionId> Server::expire_sessions(std::int64_t now_ms) {
    std::vector<SessionId> closed;
    for (auto it = sessions_.begin(); it != sessions_.end();) {
        if (now_ms - it->second.last_seen_ms > config_.heartbeat_timeout_ms) {
            closed.push_back(it->first);
            it = sessions_.erase(it);
        } else {
            ++it;
        }
    }
    return closed;
}

std::vector<Outbound> Server::handle_frame(SessionId id, std::string_view frame, std::int64_t now_ms) {
    auto decoded = decode(frame);
    if (decoded) {
        return handle_message(id, *decoded, now_ms);
    }
    std::vector<Outbound> out;
    const auto it = sessions_.find(id);
    if (it == sessions_.end()) {
        return out;
    }
    it->second.last_seen_ms = now_ms;
    push_err(out, it->second, decoded.error().msg_id, ErrCode::Malformed, decoded.error().reason);
    return out;
}

namespace {

struct ParsedBatch {
    std::vector<WriteOp> ops;
    std::string bad_path;
};

bool parse_batch(const std::vector<UpdateOp>& ops, ParsedBatch& out) {
    for (const auto& op : ops) {
        auto path = Path::parse(op.path);
        if (!path) {
            out.bad_path = op.path + ": " + datatree::to_string(path.error());
            return false;
        }
        out.ops.push_back(WriteOp{std::move(path).value(), op.value});
    }
    return true;
}

} // namespace

std::vector<Outbound> Server::handle_message(SessionId id, const WireMessage& msg, std::int64_t now_ms) {
    std::vector<Outbound> out;
    const auto it = sessions_.find(id);
    if (it == sessions_.end()) {
        return out;
    }
    SessionState& s = it->second;
    s.last_seen_ms = now_ms;
    const std::int64_t server_time = assign_server_time(now_ms);
    const std::uint64_t mid = msg.msg_id;

    if (const auto* auth = msg.as<Auth>()) {
        const auto grant = config_.tokens.find(auth->token);
        if (grant == config_.tokens.end()) {
            s.auth = rules::AuthContext::anonymous();
            push_err(out, s, mid, ErrCode::Denied, "InvalidToken");
        } else {
            s.auth = rules::AuthContext{true, grant->second.principal, grant->second.kind};
            out.push_back({id, reply(s, Ack{mid, std::nullopt, server_time, std::nullopt, std::nullopt})});
        }
        return out;
    }
    if (msg.is<Ping>()) {
        out.push_back({id, reply(s, Pong{mid, server_time})});
        return out;
    }
    if (!msg.client_initiated()) {
        push_err(out, s, mid, ErrCode::Malformed, std::string("unexpected kind ") + kind_name(msg));
        return out;
    }
    if (!s.auth.authenticated) {
        push_err(out, s, mid, ErrCode::AuthRequired, "authenticate first");
        return out;
    }

    if (const auto* put = msg.as<Put>()) {
        ParsedBatch batch;
        if (!parse_batch({UpdateOp{put->path, put->value}}, batch)) {
            push_err(out, s, mid, ErrCode::BadPath, batch.bad_path);
            return out;
        }
        handle_write(out, s, mid, std::move(batch.ops), server_time);
    } else if (const auto* upd = msg.as<Update>()) {
        ParsedBatch batch;
        if (!parse_batch(upd->ops, batch)) {
            push_err(out, s, mid, ErrCode::BadPath, batch.bad_path);
            return out;
        }
        handle_write(out, s, mid, std::move(batch.ops), server_time);
    } else if (const auto* get = msg.as<Get>()) {
        auto path = Path::parse(get->path);
        if (!path) {
            push_err(out, s, mid, ErrCode::BadPath, get->path);
            return out;
        }
        const auto decision = rules::evaluate_read(config_.rules, s.auth, *path);
        if (!decision) {
            push_err(out, s, mid, ErrCode::Denied, rules::to_string(decision.reason));
            return out;
        }
        const auto snap = store_.snapshot();
        out.push_back({id, reply(s, Ack{mid, snap->revision().value, server_time, std::nullopt, snap->get(*path)})});
    } else if (const auto* sub = msg.as<Subscribe>()) {
        auto path = Path::parse(sub->path);
        if (!path) {
            push_err(out, s, mid, ErrCode::BadPath, sub->path);
            return out;
        }
        const auto decision = rules::evaluate_read(config_.rules, s.auth, *path);
        if (!decision) {
            push_err(out, s, mid, ErrCode::Denied, rules::to_string(decision.reason));
            return out;
        }
        const std::uint64_t sub_id = next_sub_++;
        s.subscriptions.emplace(sub_id, Subscription{sub_id, *path});
        const auto snap = store_.snapshot();
        const auto rev = snap->revision().value;
        out.push_back({id, reply(s, Ack{mid, rev, server_time, sub_id, std::nullopt})});
        // Initial snapshot, stamped with the time of the commit that produced it.
        out.push_back({id, reply(s, Event{sub_id, rev, path->str(), snap->get(*path), last_commit_time_ms_})});
    } else if (const auto* unsub = msg.as<Unsubscribe>()) {
        if (s.subscriptions.erase(unsub->sub_id) == 0) {
            push_err(out, s, mid, ErrCode::UnknownSub, std::to_string(unsub->sub_id));
            return out;
        }
        out.push_back({id, reply(s, Ack{mid, std::nullopt, server_time, unsub->sub_id, std::nullopt})});
    }
    return out;
}

void Server::handle_write(std::vector<Outbound>& out, SessionState& s, std::uint64_t msg_id,
                          std::vector<WriteOp> batch, std::int64_t server_time) {
    if (auto err = datatree::validate_batch(batch)) {
        const ErrCode code = *err == datatree::CommitError::OverlappingPaths ? ErrCode::OverlappingPaths
                             : *err == datatree::CommitError::RootNotBranch  ? ErrCode::BadPath
                                                                              : ErrCode::Malformed;
        push_err(out, s, msg_id, code, datatree::to_string(*err));
        return;
    }
    const auto before = store_.snapshot();
    for (const auto& op : batch) {
        const auto decision =
            rules::evaluate_write(config_.rules, s.auth, op.path, op.value, before->get(op.path), server_time);
        if (!decision) {
            push_err(out, s, msg_id, ErrCode::Denied,
                     std::string(rules::to_string(decision.reason)) + " at " + op.path.str());
            return;
        }
    }
    auto committed = store_.commit(batch, server_time);
    if (!committed) {
        push_err(out, s, msg_id, ErrCode::Malformed, datatree::to_string(committed.error()));
        return;
    }
    last_commit_time_ms_ = server_time;
    if (observer_) {
        observer_(CommitRecord{committed->revision, server_time, std::move(batch)}, *store_.snapshot());
    }
    out.push_back({s.id, reply(s, Ack{msg_id, committed->revision.value, server_time, std::nullopt, std::nullopt})});
    fan_out(out, *committed, server_time);
}

void Server::fan_out(std::vector<Outbound>& out, const datatree::CommitResult& commit, std::int64_t server_time) {
    if (commit.events.empty()) {
        return;
    }
    const auto snap = store_.snapshot();
    for (auto& [sid, session] : sessions_) {
        for (const auto& [sub_id, sub] : session.subscriptions) {
            // Changes under the subscription report their own path; a change
            // above it reports the subscription root. One EVENT per commit,
            // located at the common ancestor of everything that changed.
            std::optional<Path> where;
            for (const auto& ev : commit.events) {
                std::optional<Path> hit;
                if (sub.path.contains(ev.path)) {
                    hit = ev.path;
                } else if (ev.path.strictly_contains(sub.path)) {
                    hit = sub.path;
                }
                if (hit) {
                    where = where ? Path::common_ancestor(*where, *hit) : *hit;
                }
            }
            if (where) {
                out.push_back({sid, reply(session, Event{sub_id, commit.revision.value, where->str(),
                                                         snap->get(*where), server_time})});
            }
        }
    }
}

} // namespace rtsync::server
