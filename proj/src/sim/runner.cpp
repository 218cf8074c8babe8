#include "rtsync/agent/agent.hpp"
#include "rtsync/server/seed.hpp"
#include "rtsync/server/server.hpp"
#include "rtsync/sim/experiment.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <memory>

namespace rtsync::sim {

namespace {

using server::SessionId;
using server::WireMessage;
using Channel = ReliableChannel<WireMessage>;

constexpr char kSubscriberToken[] = "dashboard-secret";
constexpr char kLoadToken[] = "loadgen-secret";

// Stream ids for Rng::stream, one per source of randomness.
enum Stream : std::uint64_t {
    kUplinkStream = 1,
    kDownlinkStream,
    kSensorStream,
    kClientStreamBase = 1000,
};

Window shifted(const Window& w, std::int64_t by) {
    return Window{w.start_ms + by, w.end_ms + by};
}

LinkModel absolute(LinkModel m, std::int64_t start) {
    for (auto& w : m.partitions) {
        w = shifted(w, start);
    }
    return m;
}

class Runner;

class SimTransport : public agent::Transport {
public:
    explicit SimTransport(Runner& r) : runner_(r) {}
    bool send(const WireMessage& msg) override;
    void reset() override;

private:
    Runner& runner_;
};

enum class Role { Subscriber, Commander, Load };

struct Client {
    Role role = Role::Subscriber;
    SessionId sid = 0;
    std::unique_ptr<Channel> up;
    std::unique_ptr<Channel> down;
    std::uint64_t next_id = 1;

    // Subscriber bookkeeping.
    std::uint64_t subscribe_msg = 0;
    std::optional<std::uint64_t> start_revision;
    bool initial_seen = false;
    std::uint64_t last_revision = 0;
    std::vector<std::uint64_t> received;

    // Commander: msg id -> index into the command list.
    std::map<std::uint64_t, std::size_t> pending_commands;
};

class Runner {
public:
    explicit Runner(const ExperimentConfig& cfg)
        : cfg_(cfg),
          t0_(cfg.start_epoch_ms),
          t_end_(t0_ + cfg.duration_ms),
          t_final_(t_end_ + cfg.drain_ms),
          clock_(t0_),
          server_(server_config(cfg), server::example_document()),
          uplink_(absolute(cfg.uplink, t0_), Rng::stream(cfg.seed, kUplinkStream)),
          sensors_(cfg.sensors, Rng::stream(cfg.seed, kSensorStream), t0_),
          transport_(*this),
          agent_(cfg.agent, transport_, sensors_) {
        agent_.log().set_retain(false);
        agent_.set_command_observer([this](const agent::CommandEnvelope& cmd, agent::CommandOutcome outcome,
                                           std::int64_t) { outcomes_.emplace(cmd.revision, outcome); });
        server_.set_commit_observer([this](const server::CommitRecord& rec, const datatree::Tree&) {
            ++commits_;
            const bool sets = std::any_of(rec.ops.begin(), rec.ops.end(), [](const auto& op) { return op.value.has_value(); });
            const auto now_tree = server_.snapshot();
            // Deletes of absent paths leave nothing to report.
            if (sets || !(previous_tree_ && *previous_tree_ == *now_tree)) {
                eventful_revisions_.push_back(rec.revision.value);
            }
            previous_tree_ = now_tree;
        });
        for (const auto& w : cfg.uplink.partitions) {
            windows_.push_back(w);
        }
        for (const auto& w : cfg.downlink.partitions) {
            if (std::find(windows_.begin(), windows_.end(), w) == windows_.end()) {
                windows_.push_back(w);
            }
        }
        std::sort(windows_.begin(), windows_.end(),
                  [](const Window& a, const Window& b) { return a.start_ms < b.start_ms; });
    }

    ExperimentOutput run() {
        previous_tree_ = server_.snapshot();
        agent_sid_ = server_.open_session(t0_);
        open_agent_downlink();
        agent_.start(t0_);
        clock_.schedule(t0_, [this] { agent_step(); });

        start_clients();
        schedule_commands();
        schedule_expiry(t0_ + 1000);
        clock_.schedule(t_end_, [this] { agent_.set_sampling(false); });
        clock_.schedule(t_final_, [this] { stopping_ = true; });

        clock_.run_until(t_final_);
        // Freeze the agent; let every message already in flight land.
        stopping_ = true;
        while (clock_.run_next()) {
        }
        return finish();
    }

    // --- agent side --------------------------------------------------------------

    bool agent_send(const WireMessage& msg) {
        const auto now = clock_.now();
        const auto at = uplink_.transmit(now);
        record_trace("agent-up", now, at, msg);
        if (!at) {
            return false;
        }
        clock_.schedule(*at, [this, msg, epoch = agent_epoch_] {
            if (epoch != agent_epoch_) {
                return; // connection torn down meanwhile
            }
            deliver_from_agent(msg);
        });
        return true;
    }

    void agent_reset() {
        route_.erase(agent_sid_);
        server_.close_session(agent_sid_);
        ++agent_epoch_;
        agent_sid_ = server_.open_session(clock_.now());
        open_agent_downlink();
    }

private:
    static server::ServerConfig server_config(const ExperimentConfig& cfg) {
        server::ServerConfig sc;
        sc.heartbeat_timeout_ms = cfg.heartbeat_timeout_ms;
        sc.tokens[cfg.agent.token] = server::TokenGrant{cfg.agent.device_id, rules::PrincipalKind::Device};
        sc.tokens[kSubscriberToken] = server::TokenGrant{"dashboard", rules::PrincipalKind::User};
        sc.tokens[kLoadToken] = server::TokenGrant{"loadgen", rules::PrincipalKind::Device};
        return sc;
    }

    void open_agent_downlink() {
        const auto stream = kDownlinkStream + 7919 * agent_epoch_;
        auto ch = std::make_unique<Channel>(
            Link(absolute(cfg_.downlink, t0_), Rng::stream(cfg_.seed, stream)), clock_,
            [this, epoch = agent_epoch_](WireMessage msg, std::int64_t at) {
                if (epoch != agent_epoch_ || stopping_) {
                    return;
                }
                agent_.receive(std::move(msg), at);
                agent_step();
            });
        if (cfg_.trace) {
            ch->set_observer([this](const WireMessage& m, std::int64_t t, std::optional<std::int64_t> at) {
                record_trace("agent-down", t, at, m);
            });
        }
        route_[agent_sid_] = kAgentRoute;
        agent_down_ = ch.get();
        retired_channels_.push_back(std::move(ch));
    }

    void deliver_from_agent(const WireMessage& msg) {
        const auto now = clock_.now();
        if (!server_.is_open(agent_sid_)) {
            // The server dropped the session; the next frame silently opens a new one.
            route_.erase(agent_sid_);
            agent_sid_ = server_.open_session(now);
            route_[agent_sid_] = kAgentRoute;
        }
        dispatch(server_.handle_message(agent_sid_, msg, now));
    }

    void dispatch(const std::vector<server::Outbound>& out) {
        for (const auto& o : out) {
            const auto it = route_.find(o.to);
            if (it == route_.end()) {
                continue;
            }
            if (it->second == kAgentRoute) {
                agent_down_->send(o.msg);
            } else {
                clients_[it->second].down->send(o.msg);
            }
        }
    }

    void agent_step() {
        if (stopping_) {
            return;
        }
        const auto now = clock_.now();
        const auto delivered_before = agent_.uplink().counters().delivered;
        const auto effects = agent_.step(now);
        for (const auto& e : effects) {
            if (const auto* act = std::get_if<agent::ActuatorEffect>(&e)) {
                if (act->revision != 0) {
                    applied_.emplace(act->revision, now);
                }
            }
        }
        if (!windows_.empty() && agent_.uplink().counters().delivered > delivered_before) {
            deliveries_.emplace_back(now, agent_.uplink().last_delivered()->sample_time_ms);
        }
        ++conservation_checks_;
        if (!agent_.uplink().conserved()) {
            ++conservation_violations_;
        }
        if (const auto next = agent_.next_wakeup()) {
            const auto at = std::max(*next, now + 1);
            if (at < agent_wake_at_) {
                agent_wake_at_ = at;
                clock_.schedule(at, [this, at] {
                    if (agent_wake_at_ != at) {
                        return;
                    }
                    agent_wake_at_ = std::numeric_limits<std::int64_t>::max();
                    agent_step();
                });
            }
        }
    }

    // --- clients ------------------------------------------------------------------

    void start_clients() {
        std::vector<Role> roles(cfg_.subscribers, Role::Subscriber);
        if (!cfg_.commands.empty() || cfg_.periodic.count > 0) {
            roles.push_back(Role::Commander);
        }
        if (cfg_.load_rate_hz > 0) {
            roles.push_back(Role::Load);
        }
        clients_.resize(roles.size());
        for (std::size_t i = 0; i < roles.size(); ++i) {
            auto& c = clients_[i];
            c.role = roles[i];
            c.sid = server_.open_session(t0_);
            route_[c.sid] = i;
            const auto link = absolute(cfg_.client_link, t0_);
            c.up = std::make_unique<Channel>(Link(link, Rng::stream(cfg_.seed, kClientStreamBase + 2 * i)), clock_,
                                             [this, i](WireMessage m, std::int64_t) { deliver_from_client(i, m); });
            c.down = std::make_unique<Channel>(Link(link, Rng::stream(cfg_.seed, kClientStreamBase + 2 * i + 1)),
                                               clock_,
                                               [this, i](WireMessage m, std::int64_t) { client_receive(i, m); });
            if (cfg_.trace) {
                const std::string name = "client" + std::to_string(i);
                c.up->set_observer([this, name](const WireMessage& m, std::int64_t t, std::optional<std::int64_t> at) {
                    record_trace(name + "-up", t, at, m);
                });
                c.down->set_observer([this, name](const WireMessage& m, std::int64_t t, std::optional<std::int64_t> at) {
                    record_trace(name + "-down", t, at, m);
                });
            }
            client_send(i, server::Auth{c.role == Role::Load ? kLoadToken : kSubscriberToken});
            if (c.role == Role::Subscriber) {
                c.subscribe_msg = client_send(i, server::Subscribe{"/"});
            }
            schedule_client_ping(i, t0_ + cfg_.client_ping_ms);
        }
        if (cfg_.load_rate_hz > 0) {
            schedule_load(clients_.size() - 1, 0);
        }
    }

    std::uint64_t client_send(std::size_t i, server::Body body) {
        auto& c = clients_[i];
        const auto id = c.next_id++;
        c.up->send(WireMessage{id, std::move(body)});
        return id;
    }

    void deliver_from_client(std::size_t i, const WireMessage& msg) {
        auto& c = clients_[i];
        const auto now = clock_.now();
        if (!server_.is_open(c.sid)) {
            route_.erase(c.sid);
            c.sid = server_.open_session(now);
            route_[c.sid] = i;
        }
        dispatch(server_.handle_message(c.sid, msg, now));
    }

    void client_receive(std::size_t i, const WireMessage& msg) {
        auto& c = clients_[i];
        if (const auto* ack = msg.as<server::Ack>()) {
            if (c.role == Role::Subscriber && ack->msg_id == c.subscribe_msg && ack->revision) {
                c.start_revision = *ack->revision;
                c.last_revision = *ack->revision;
            }
            if (const auto it = c.pending_commands.find(ack->msg_id); it != c.pending_commands.end()) {
                commands_[it->second].revision = ack->revision;
                c.pending_commands.erase(it);
            }
        } else if (const auto* err = msg.as<server::Err>()) {
            if (const auto it = c.pending_commands.find(err->msg_id); it != c.pending_commands.end()) {
                commands_[it->second].rejected_by_server = true;
                c.pending_commands.erase(it);
            }
        } else if (const auto* ev = msg.as<server::Event>()) {
            if (c.role != Role::Subscriber || !c.start_revision) {
                return;
            }
            if (!c.initial_seen && ev->revision == *c.start_revision) {
                c.initial_seen = true; // snapshot of the state at subscription time
                return;
            }
            ++subscriber_events_;
            if (!c.received.empty() && ev->revision == c.received.back()) {
                ++event_duplicates_;
            } else if (ev->revision <= c.last_revision) {
                ++event_order_violations_;
            }
            c.last_revision = std::max(c.last_revision, ev->revision);
            c.received.push_back(ev->revision);
        }
    }

    void schedule_client_ping(std::size_t i, std::int64_t at) {
        clock_.schedule(at, [this, i] {
            if (stopping_) {
                return;
            }
            client_send(i, server::Ping{});
            schedule_client_ping(i, clock_.now() + cfg_.client_ping_ms);
        });
    }

    void schedule_load(std::size_t i, std::uint64_t k) {
        const auto at = t0_ + static_cast<std::int64_t>(static_cast<double>(k) * 1000.0 / cfg_.load_rate_hz);
        if (at >= t_end_) {
            return;
        }
        clock_.schedule(at, [this, i, k] {
            const double value = 20.0 + static_cast<double>(k % 50) * 0.1;
            client_send(i, server::Put{"/sensors/temperature", datatree::Value(value), clock_.now()});
            schedule_load(i, k + 1);
        });
    }

    void schedule_commands() {
        std::vector<ScriptedCommand> all = cfg_.commands;
        bool next_value[2] = {true, true};
        for (std::uint64_t k = 0; k < cfg_.periodic.count; ++k) {
            const int idx = static_cast<int>(k % 2);
            all.push_back(ScriptedCommand{cfg_.periodic.start_ms + static_cast<std::int64_t>(k) * cfg_.periodic.every_ms,
                                          idx == 0 ? "led1" : "led2", next_value[idx]});
            next_value[idx] = !next_value[idx];
        }
        std::stable_sort(all.begin(), all.end(),
                         [](const ScriptedCommand& a, const ScriptedCommand& b) { return a.at_ms < b.at_ms; });
        if (all.empty()) {
            return;
        }
        const std::size_t commander = cfg_.subscribers; // placed right after the subscribers
        for (const auto& cmd : all) {
            clock_.schedule(t0_ + cmd.at_ms, [this, commander, cmd] {
                const auto now = clock_.now();
                commands_.push_back(CommandRecord{now, cmd.target, cmd.value, {}, false, {}, {}});
                const auto id = client_send(commander, server::Put{"/leds/" + cmd.target, datatree::Value(cmd.value), now});
                clients_[commander].pending_commands.emplace(id, commands_.size() - 1);
            });
        }
    }

    void schedule_expiry(std::int64_t at) {
        clock_.schedule(at, [this] {
            if (stopping_) {
                return;
            }
            for (const auto sid : server_.expire_sessions(clock_.now())) {
                route_.erase(sid);
            }
            schedule_expiry(clock_.now() + 1000);
        });
    }

    // --- reporting ------------------------------------------------------------------

    void record_trace(const std::string& link, std::int64_t t, std::optional<std::int64_t> at, const WireMessage& msg) {
        if (!cfg_.trace) {
            return;
        }
        trace_ += R"({"at":)";
        trace_ += at ? std::to_string(*at - t0_) : std::string("null");
        trace_ += R"(,"link":")" + link + R"(","msg":)";
        trace_ += server::encode(msg);
        trace_ += R"(,"t":)" + std::to_string(t - t0_) + "}\n";
    }

    ExperimentOutput finish() {
        MetricsReport r;
        r.experiment = cfg_.name;
        r.seed = cfg_.seed;
        r.duration_ms = cfg_.duration_ms;

        const auto& uc = agent_.uplink().counters();
        r.frames_produced = uc.produced;
        r.frames_delivered = uc.delivered;
        r.frames_first_pass = uc.delivered_first_pass;
        r.frames_buffered = uc.buffered;
        r.frames_dropped = uc.dropped;
        r.frames_pending = agent_.uplink().size();
        if (uc.produced > 0) {
            r.first_pass_success_rate = static_cast<double>(uc.delivered_first_pass) / static_cast<double>(uc.produced);
            r.eventual_delivery_rate = static_cast<double>(uc.delivered) / static_cast<double>(uc.produced);
        }
        r.sensor_update_hz = static_cast<double>(uc.produced) / (static_cast<double>(cfg_.duration_ms) / 1000.0);

        for (auto& cmd : commands_) {
            if (cmd.revision) {
                if (const auto it = outcomes_.find(*cmd.revision); it != outcomes_.end()) {
                    cmd.outcome = it->second;
                }
                if (const auto it = applied_.find(*cmd.revision); it != applied_.end()) {
                    cmd.applied_ms = it->second;
                }
            }
            ++r.commands_issued;
            if (cmd.rejected_by_server) {
                ++r.commands_rejected_by_server;
            } else if (!cmd.outcome) {
                ++r.commands_unresolved;
            } else if (*cmd.outcome == agent::CommandOutcome::Accepted) {
                ++r.commands_accepted;
            } else if (*cmd.outcome == agent::CommandOutcome::RejectedStale) {
                ++r.commands_rejected_stale;
            } else {
                ++r.commands_rejected_replay;
            }
        }
        r.control_latency = measure_control_latency(commands_);

        for (const auto& w : windows_) {
            RecoveryRecord rec{w, {}, {}};
            const auto start = w.start_ms + t0_;
            const auto end = w.end_ms + t0_;
            const bool sampled_inside = w.end_ms - w.start_ms >= cfg_.agent.sample_period_ms;
            for (const auto& [at, sample] : deliveries_) {
                if (at >= end && (!sampled_inside || sample >= start)) {
                    rec.recovery_time_ms = at - start;
                    rec.after_end_ms = at - end;
                    break;
                }
            }
            r.recovery.push_back(rec);
        }

        r.subscribers = cfg_.subscribers;
        r.subscriber_events = subscriber_events_;
        r.event_order_violations = event_order_violations_;
        r.event_duplicates = event_duplicates_;
        for (const auto& c : clients_) {
            if (c.role != Role::Subscriber) {
                continue;
            }
            if (!c.start_revision) {
                r.event_loss_count += eventful_revisions_.size();
                continue;
            }
            std::vector<std::uint64_t> got = c.received;
            std::sort(got.begin(), got.end());
            got.erase(std::unique(got.begin(), got.end()), got.end());
            for (const auto rev : eventful_revisions_) {
                if (rev > *c.start_revision && !std::binary_search(got.begin(), got.end(), rev)) {
                    ++r.event_loss_count;
                }
            }
        }

        const auto& ac = agent_.counters();
        r.commits = commits_;
        r.safe_mode_entries = ac.safe_mode_entries;
        r.resets = ac.resets;
        r.reconnects = ac.reconnects;
        r.link_failures = ac.link_failures;
        r.conservation_checks = conservation_checks_;
        r.conservation_violations = conservation_violations_;
        r.commands = commands_;
        return ExperimentOutput{std::move(r), std::move(trace_)};
    }

    static constexpr std::size_t kAgentRoute = std::numeric_limits<std::size_t>::max();

    const ExperimentConfig& cfg_;
    std::int64_t t0_;
    std::int64_t t_end_;
    std::int64_t t_final_;
    SimClock clock_;
    server::Server server_;
    Link uplink_;
    SyntheticSensors sensors_;
    SimTransport transport_;
    agent::Agent agent_;

    SessionId agent_sid_ = 0;
    std::uint64_t agent_epoch_ = 0;
    Channel* agent_down_ = nullptr;
    std::vector<std::unique_ptr<Channel>> retired_channels_;
    std::int64_t agent_wake_at_ = std::numeric_limits<std::int64_t>::max();
    bool stopping_ = false;

    std::map<SessionId, std::size_t> route_;
    std::vector<Client> clients_;

    std::vector<CommandRecord> commands_;
    std::map<std::uint64_t, agent::CommandOutcome> outcomes_;
    std::map<std::uint64_t, std::int64_t> applied_;
    std::vector<Window> windows_;
    std::vector<std::pair<std::int64_t, std::int64_t>> deliveries_; // (ack time, sample time)

    std::shared_ptr<const datatree::Tree> previous_tree_;
    std::vector<std::uint64_t> eventful_revisions_;
    std::uint64_t commits_ = 0;
    std::uint64_t subscriber_events_ = 0;
    std::uint64_t event_order_violations_ = 0;
    std::uint64_t event_duplicates_ = 0;
    std::uint64_t conservation_checks_ = 0;
    std::uint64_t conservation_violations_ = 0;
    std::string trace_;
};

bool SimTransport::send(const WireMessage& msg) {
    return runner_.agent_send(msg);
}

void SimTransport::reset() {
    runner_.agent_reset();
}

} // namespace

Result<ExperimentOutput, ConfigInvalid> run_experiment(const ExperimentConfig& config) {
    // Re-validate: configs built in code bypass the JSON loader.
    auto checked = experiment_config_from_json(to_json(config));
    if (!checked) {
        return fail(checked.error());
    }
    Runner runner(config);
    return runner.run();
}

} // namespace rtsync::sim
