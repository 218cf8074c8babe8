#pragma once

#include "rtsync/datatree/tree.hpp"
#include "rtsync/rules/rules.hpp"
#include "rtsync/server/persistence.hpp"
#include "rtsync/server/wire.hpp"

#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace rtsync::server {

using SessionId = std::uint64_t;

struct TokenGrant {
    std::string principal;
    rules::PrincipalKind kind = rules::PrincipalKind::User;
};

struct ServerConfig {
    std::int64_t heartbeat_timeout_ms = 15'000;
    rules::RuleSet rules = rules::default_ruleset();
    std::map<std::string, TokenGrant, std::less<>> tokens;
};

// Authoritative timestamps: never decreases, even if the underlying clock does.
class ServerClock {
public:
    std::int64_t assign(std::int64_t observed_ms) noexcept {
        if (observed_ms > last_) {
            last_ = observed_ms;
        }
        return last_;
    }
    std::int64_t last() const noexcept { return last_; }

private:
    std::int64_t last_ = std::numeric_limits<std::int64_t>::min();
};

struct Subscription {
    std::uint64_t id = 0;
    datatree::Path path;
};

struct SessionState {
    SessionId id = 0;
    rules::AuthContext auth;
    std::map<std::uint64_t, Subscription> subscriptions;
    std::int64_t last_seen_ms = 0;
    std::uint64_t next_out_id = 1;
};

struct Outbound {
    SessionId to = 0;
    WireMessage msg;
};

// Transport-independent core of the realtime database service. Callers feed
// it decoded frames with the arrival time and deliver the returned messages
// in order. Not internally synchronized: drive it from one thread.
class Server {
public:
    using CommitObserver = std::function<void(const CommitRecord&, const datatree::Tree&)>;

    explicit Server(ServerConfig config, datatree::Tree initial = {});

    SessionId open_session(std::int64_t now_ms);
    void close_session(SessionId id);
    bool is_open(SessionId id) const { return sessions_.count(id) != 0; }
    const SessionState* session(SessionId id) const;
    std::size_t session_count() const noexcept { return sessions_.size(); }

    // Every client-initiated message yields exactly one ACK, ERR or PONG for
    // the sender, followed by any EVENTs the commit fans out. Messages for
    // unknown sessions are ignored.
    std::vector<Outbound> handle_message(SessionId id, const WireMessage& msg, std::int64_t now_ms);
    std::vector<Outbound> handle_frame(SessionId id, std::string_view frame, std::int64_t now_ms);

    // Closes sessions silent for longer than the heartbeat timeout.
    std::vector<SessionId> expire_sessions(std::int64_t now_ms);

    std::int64_t assign_server_time(std::int64_t now_ms) noexcept { return clock_.assign(now_ms); }

    std::shared_ptr<const datatree::Tree> snapshot() const { return store_.snapshot(); }
    datatree::Revision revision() const { return store_.snapshot()->revision(); }
    std::int64_t last_commit_time_ms() const noexcept { return last_commit_time_ms_; }

    void set_commit_observer(CommitObserver observer) { observer_ = std::move(observer); }
    const ServerConfig& config() const noexcept { return config_; }

private:
    WireMessage reply(SessionState& s, Body body);
    void push_err(std::vector<Outbound>& out, SessionState& s, std::uint64_t msg_id, ErrCode code,
                  std::string reason);
    void handle_write(std::vector<Outbound>& out, SessionState& s, std::uint64_t msg_id,
                      std::vector<datatree::WriteOp> batch, std::int64_t server_time);
    void fan_out(std::vector<Outbound>& out, const datatree::CommitResult& commit, std::int64_t server_time);

    ServerConfig config_;
    datatree::Store store_;
    ServerClock clock_;
    std::map<SessionId, SessionState> sessions_;
    SessionId next_session_ = 1;
    std::uint64_t next_sub_ = 1;
    std::int64_t last_commit_time_ms_ = 0;
    CommitObserver observer_;
};

} // namespace rtsync::server
