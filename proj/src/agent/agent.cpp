#include "rtsync/agent/agent.hpp"

#include "rtsync/util/iso_time.hpp"

#include <algorithm>

namespace rtsync::agent {

using datatree::Branch;
using datatree::Value;
using namespace rtsync::server;

const char* to_string(LinkState s) {
    switch (s) {
    case LinkState::Connecting:
        return "connecting";
    case LinkState::Online:
        return "online";
    case LinkState::Reconnecting:
        return "reconnecting";
    }
    return "?";
}

Update frame_update(const ProcessedFrame& f) {
    return Update{{
        {"/sensors/temperature", Value(f.temperature_c)},
        {"/sensors/humidity", Value(f.humidity_pct)},
        {"/sensors/distance", Value(f.distance_cm)},
        {"/metadata/last_update", Value(util::format_iso8601_ms(f.sample_time_ms))},
    }};
}

namespace {

UplinkConfig uplink_config(const AgentConfig& c) {
    UplinkConfig u;
    u.capacity = c.buffer_capacity;
    u.max_attempts = c.max_attempts;
    u.max_in_flight = c.max_in_flight;
    u.ack_timeout_ms = c.ack_timeout_ms;
    u.retry_after_ms = c.retry_after_ms;
    u.backoff = c.backoff;
    return u;
}

} // namespace

Agent::Agent(AgentConfig config, Transport& transport, SensorSource& sensors, Actuator* actuator)
    : config_(std::move(config)),
      transport_(transport),
      sensors_(sensors),
      actuator_(actuator),
      uplink_(uplink_config(config_)),
      gate_(config_.staleness_window_ms),
      health_(config_.safe_mode_threshold),
      subscriptions_{SubscriptionState::fresh("/leds/led1"), SubscriptionState::fresh("/leds/led2")} {}

void Agent::start(std::int64_t now_ms) {
    started_ = true;
    next_sample_ms_ = now_ms;
    next_status_ms_ = now_ms;
    next_health_ms_ = now_ms + config_.health_phase_ms;
    last_server_contact_ms_ = now_ms;
    begin_connect(now_ms);
}

void Agent::receive(WireMessage msg, std::int64_t local_time_ms) {
    inbox_.emplace_back(std::move(msg), local_time_ms);
}

void Agent::note(std::int64_t now_ms, ActionKind kind, std::string detail) {
    log_.append(now_ms, kind, detail);
    if (effects_) {
        effects_->push_back(LogEffect{ActionRecord{now_ms, kind, std::move(detail)}});
    }
}

bool Agent::send(Body body, Purpose purpose, std::int64_t now_ms) {
    WireMessage msg{next_msg_id_++, std::move(body)};
    const bool ok = transport_.send(msg);
    if (ok) {
        pending_[msg.msg_id] = PendingRequest{purpose, now_ms};
    }
    if (effects_) {
        effects_->push_back(SentEffect{std::move(msg), ok});
    }
    return ok;
}

std::optional<std::uint64_t> Agent::send_frame(const ProcessedFrame& f, std::int64_t now_ms) {
    WireMessage msg{next_msg_id_++, frame_update(f)};
    const bool ok = transport_.send(msg);
    if (effects_) {
        effects_->push_back(SentEffect{msg, ok});
    }
    (void)now_ms;
    if (!ok) {
        return std::nullopt;
    }
    return msg.msg_id;
}

// --- connection management --------------------------------------------------

void Agent::begin_connect(std::int64_t now_ms) {
    link_ = LinkState::Connecting;
    connect_at_ = now_ms;
    connect_attempts_ = 0;
    auth_msg_.reset();
    // A new session starts without subscriptions.
    for (auto& sub : subscriptions_) {
        sub = SubscriptionState::fresh(sub.path);
    }
    for (auto& [target, ack] : acks_) {
        ack.msg.reset();
        ack.retry_at_ms = now_ms;
    }
}

void Agent::go_online(std::int64_t now_ms) {
    const bool was_down = link_ == LinkState::Reconnecting;
    link_ = LinkState::Online;
    probe_delays_.clear();
    probe_attempts_ = 0;
    heartbeat_failures_ = 0;
    heartbeat_msg_.reset();
    next_heartbeat_ms_ = now_ms + config_.heartbeat_interval_ms;
    if (was_down) {
        ++counters_.reconnects;
        note(now_ms, ActionKind::Recovery, "reconnected after " + std::to_string(now_ms - link_down_since_ms_) + " ms");
    }
    // Buffered frames go out first, oldest first.
    uplink_.resume(now_ms);
}

void Agent::link_down(std::int64_t now_ms, const char* why) {
    if (link_ == LinkState::Reconnecting) {
        return;
    }
    ++counters_.link_failures;
    link_ = LinkState::Reconnecting;
    link_down_since_ms_ = now_ms;
    probe_attempts_ = 0;
    probe_delays_.clear();
    const auto delay = config_.backoff.delay(0);
    probe_delays_.push_back(delay);
    next_probe_ms_ = now_ms + delay;
    heartbeat_msg_.reset();
    note(now_ms, ActionKind::Recovery, std::string("link down: ") + why);
}

void Agent::run_connection(std::int64_t now_ms) {
    switch (link_) {
    case LinkState::Connecting:
        if (connect_at_ && *connect_at_ <= now_ms) {
            // The session handles messages in order, so SUBSCRIBEs and frames
            // can follow AUTH without waiting for its ACK.
            const auto id = next_msg_id_;
            if (send(Auth{config_.token}, Purpose::Auth, now_ms)) {
                auth_msg_ = id;
                connect_at_.reset();
                go_online(now_ms);
            } else {
                connect_at_ = now_ms + config_.backoff.delay(connect_attempts_++);
            }
        }
        break;
    case LinkState::Reconnecting:
        if (next_probe_ms_ <= now_ms) {
            send(Ping{}, Purpose::Probe, now_ms);
            const auto delay = config_.backoff.delay(++probe_attempts_);
            probe_delays_.push_back(delay);
            next_probe_ms_ = now_ms + delay;
        }
        break;
    case LinkState::Online:
        break;
    }
    if (link_ == LinkState::Online) {
        ensure_subscriptions(now_ms);
        ensure_acks(now_ms);
    }
}

void Agent::ensure_subscriptions(std::int64_t now_ms) {
    for (auto& sub : subscriptions_) {
        if (sub.active || sub.retry_at_ms > now_ms) {
            continue;
        }
        const auto id = next_msg_id_;
        if (send(Subscribe{sub.path}, Purpose::Subscribe, now_ms)) {
            sub.msg = id;
            sub.retry_at_ms = now_ms + config_.ack_timeout_ms;
        } else {
            sub.msg.reset();
            sub.retry_at_ms = now_ms + config_.backoff.delay(0);
        }
    }
}

void Agent::ensure_acks(std::int64_t now_ms) {
    for (auto& [target, ack] : acks_) {
        if (ack.retry_at_ms > now_ms) {
            continue;
        }
        Branch body{{"revision", Value(static_cast<double>(ack.revision))},
                    {"applied_at", Value(static_cast<double>(ack.applied_at_ms))}};
        const auto id = next_msg_id_;
        if (send(Put{"/metadata/ack/" + target, Value(std::move(body)), now_ms}, Purpose::CommandAck, now_ms)) {
            ack.msg = id;
            ack.retry_at_ms = now_ms + config_.ack_timeout_ms;
        } else {
            ack.msg.reset();
            ack.retry_at_ms = now_ms + config_.backoff.delay(0);
        }
    }
}

void Agent::run_heartbeat(std::int64_t now_ms) {
    if (link_ != LinkState::Online) {
        return;
    }
    if (heartbeat_msg_) {
        const auto it = pending_.find(*heartbeat_msg_);
        if (it != pending_.end() && now_ms - it->second.sent_local_ms >= config_.ack_timeout_ms) {
            pending_.erase(it);
            heartbeat_msg_.reset();
            link_down(now_ms, "heartbeat unanswered");
            return;
        }
    }
    if (next_heartbeat_ms_ > now_ms) {
        return;
    }
    const auto id = next_msg_id_;
    if (send(Ping{}, Purpose::Heartbeat, now_ms)) {
        heartbeat_failures_ = 0;
        if (!heartbeat_msg_) {
            heartbeat_msg_ = id;
        }
        next_heartbeat_ms_ = now_ms + config_.heartbeat_interval_ms;
    } else if (++heartbeat_failures_ >= config_.max_attempts) {
        heartbeat_failures_ = 0;
        next_heartbeat_ms_ = now_ms + config_.heartbeat_interval_ms;
        link_down(now_ms, "heartbeat not sent");
    } else {
        next_heartbeat_ms_ = now_ms + config_.backoff.delay(heartbeat_failures_ - 1);
    }
}

void Agent::run_uplink(std::int64_t now_ms) {
    if (health_.state().mode == Mode::SafeMode) {
        return;
    }
    const bool online = link_ == LinkState::Online;
    const auto result = uplink_.pump(now_ms, online, [&](const ProcessedFrame& f) { return send_frame(f, now_ms); });
    if (result.newly_buffered > 0) {
        note(now_ms, ActionKind::Tx, "buffered " + std::to_string(result.newly_buffered) + " frame(s), queue " +
                                         std::to_string(uplink_.size()));
    }
    if (result.link_failure && online) {
        link_down(now_ms, "uplink attempts exhausted");
    }
}

void Agent::full_reset(std::int64_t now_ms) {
    ++counters_.resets;
    reset_at_ms_.reset();
    transport_.reset();
    filter_.reset();
    health_.reset();
    // Replay protection survives: forgetting it would let a delayed, already
    // superseded command through again.
    gate_.power_cycle();
    if (actuator_) {
        actuator_->set("led1", false);
        actuator_->set("led2", false);
    }
    if (effects_) {
        effects_->push_back(ActuatorEffect{"led1", false, 0});
        effects_->push_back(ActuatorEffect{"led2", false, 0});
    }
    latest_.reset();
    pending_.clear();
    heartbeat_msg_.reset();
    heartbeat_failures_ = 0;
    clock_offset_ms_ = 0;
    best_rtt_ms_.reset();
    uplink_.requeue_in_flight(now_ms);
    uplink_.resume(now_ms);
    last_server_contact_ms_ = now_ms;
    probe_delays_.clear();
    note(now_ms, ActionKind::Mode, "full reset");
    begin_connect(now_ms);
}

// --- inbound ------------------------------------------------------------------

void Agent::process(const WireMessage& msg, std::int64_t recv_ms, std::int64_t now_ms) {
    last_server_contact_ms_ = std::max(last_server_contact_ms_, recv_ms);
    if (const auto* ack = msg.as<Ack>()) {
        on_ack(*ack, now_ms);
    } else if (const auto* err = msg.as<Err>()) {
        on_err(*err, now_ms);
    } else if (const auto* pong = msg.as<Pong>()) {
        on_pong(*pong, recv_ms, now_ms);
    } else if (const auto* ev = msg.as<Event>()) {
        on_event(*ev, now_ms);
    }
}

void Agent::on_ack(const Ack& ack, std::int64_t now_ms) {
    if (uplink_.on_ack(ack.msg_id)) {
        health_.state().last_successful_tx_ms = now_ms;
        return;
    }
    const auto it = pending_.find(ack.msg_id);
    if (it == pending_.end()) {
        return;
    }
    if (it->second.purpose == Purpose::Auth && auth_msg_ == ack.msg_id) {
        auth_msg_.reset();
        note(now_ms, ActionKind::Recovery, "authenticated");
    }
    for (auto& sub : subscriptions_) {
        if (sub.msg == ack.msg_id) {
            sub.active = true;
            sub.msg.reset();
            sub.sub_id = ack.sub_id;
            sub.awaiting_snapshot = ack.sub_id.has_value();
        }
    }
    std::erase_if(acks_, [&](const auto& entry) { return entry.second.msg == ack.msg_id; });
    pending_.erase(it);
}

void Agent::on_err(const Err& err, std::int64_t now_ms) {
    const bool session_lost = err.code == ErrCode::AuthRequired;
    if (session_lost) {
        uplink_.on_retryable(err.msg_id, now_ms);
    } else if (uplink_.on_rejected(err.msg_id)) {
        note(now_ms, ActionKind::Tx, std::string("frame rejected: ") + to_string(err.code) + " " + err.reason);
        return;
    }
    for (auto& sub : subscriptions_) {
        if (sub.msg == err.msg_id && !session_lost) {
            sub.msg.reset();
            sub.retry_at_ms = now_ms + config_.retry_after_ms;
            note(now_ms, ActionKind::Recovery, "subscribe " + sub.path + " refused: " + err.reason);
        }
    }
    for (auto entry = acks_.begin(); entry != acks_.end();) {
        if (entry->second.msg != err.msg_id) {
            ++entry;
        } else if (session_lost) {
            entry->second.msg.reset();
            entry->second.retry_at_ms = now_ms;
            ++entry;
        } else {
            note(now_ms, ActionKind::Cmd, "ack for " + entry->first + " refused: " + err.reason);
            entry = acks_.erase(entry);
        }
    }
    const auto it = pending_.find(err.msg_id);
    const bool auth_refused = it != pending_.end() && it->second.purpose == Purpose::Auth;
    if (it != pending_.end()) {
        pending_.erase(it);
    }
    if (auth_refused) {
        auth_msg_.reset();
        note(now_ms, ActionKind::Recovery, "auth refused: " + err.reason);
        uplink_.requeue_in_flight(now_ms);
        const auto attempts = connect_attempts_;
        begin_connect(now_ms);
        connect_attempts_ = attempts + 1;
        connect_at_ = now_ms + config_.backoff.delay(attempts);
        return;
    }
    if (session_lost && link_ != LinkState::Connecting) {
        note(now_ms, ActionKind::Recovery, "session lost, re-authenticating");
        uplink_.requeue_in_flight(now_ms);
        begin_connect(now_ms);
    }
}

void Agent::on_pong(const Pong& pong, std::int64_t recv_ms, std::int64_t now_ms) {
    const auto it = pending_.find(pong.msg_id);
    if (it != pending_.end()) {
        // Offset from the fastest round trip seen, assuming symmetric legs.
        const auto rtt = recv_ms - it->second.sent_local_ms;
        if (!best_rtt_ms_ || rtt < *best_rtt_ms_) {
            best_rtt_ms_ = rtt;
            clock_offset_ms_ = pong.server_time_ms + rtt / 2 - recv_ms;
        }
        pending_.erase(it);
    }
    if (heartbeat_msg_ == pong.msg_id) {
        heartbeat_msg_.reset();
    }
    if (link_ == LinkState::Reconnecting) {
        go_online(now_ms);
    }
}

void Agent::on_event(const Event& ev, std::int64_t now_ms) {
    constexpr std::string_view prefix = "/leds/";
    if (ev.path.rfind(prefix, 0) != 0) {
        return;
    }
    const std::string target = ev.path.substr(prefix.size());
    if (!known_target(target) || !ev.value || !ev.value->is_bool()) {
        note(now_ms, ActionKind::Cmd, "ignored event at " + ev.path);
        return;
    }
    bool snapshot = false;
    for (auto& sub : subscriptions_) {
        if (sub.awaiting_snapshot && sub.sub_id == ev.sub_id) {
            sub.awaiting_snapshot = false;
            snapshot = true;
        }
    }
    apply_command(CommandEnvelope{target, ev.value->as_bool(), ev.server_time_ms, ev.revision}, now_ms, snapshot);
}

Result<CommandOutcome, CommandError> Agent::handle_command(const CommandEnvelope& cmd, std::int64_t now_ms) {
    return apply_command(cmd, now_ms, false);
}

Result<CommandOutcome, CommandError> Agent::sync_command(const CommandEnvelope& cmd, std::int64_t now_ms) {
    return apply_command(cmd, now_ms, true);
}

Result<CommandOutcome, CommandError> Agent::apply_command(const CommandEnvelope& cmd, std::int64_t now_ms,
                                                          bool state_sync) {
    const auto server_now = server_time_estimate(now_ms);
    auto outcome = state_sync ? gate_.sync(cmd) : gate_.handle(cmd, server_now);
    if (!outcome) {
        note(now_ms, ActionKind::Cmd, "unknown target " + cmd.target);
        return outcome;
    }
    const std::string what = cmd.target + "=" + (cmd.value ? "true" : "false") + " rev " +
                             std::to_string(cmd.revision) + " age " + std::to_string(server_now - cmd.command_time_ms);
    if (command_observer_) {
        command_observer_(cmd, *outcome, now_ms);
    }
    switch (*outcome) {
    case CommandOutcome::RejectedStale:
        ++counters_.commands_stale;
        note(now_ms, ActionKind::Cmd, "stale " + what);
        break;
    case CommandOutcome::RejectedReplay:
        ++counters_.commands_replayed;
        note(now_ms, ActionKind::Cmd, "replay " + what);
        break;
    case CommandOutcome::Accepted:
        ++counters_.commands_accepted;
        if (actuator_) {
            actuator_->set(cmd.target, cmd.value);
        }
        if (effects_) {
            effects_->push_back(ActuatorEffect{cmd.target, cmd.value, cmd.revision});
        }
        note(now_ms, ActionKind::Cmd, (state_sync ? "synced " : "applied ") + what);
        acks_[cmd.target] = PendingAck{cmd.revision, server_now, std::nullopt, now_ms};
        if (link_ == LinkState::Online) {
            ensure_acks(now_ms);
        }
        break;
    }
    return outcome;
}

// --- periodic work ----------------------------------------------------------------

Result<ProcessedFrame, FilterError> Agent::acquire(std::int64_t now_ms) {
    auto frame = sensors_.read(now_ms);
    frame.sample_time_ms = now_ms;
    ++counters_.samples;
    auto processed = filter_.apply(frame);
    if (!processed) {
        ++counters_.skipped_samples;
        note(now_ms, ActionKind::Tx, "sample skipped: no valid reading yet");
        return processed;
    }
    latest_ = *processed;
    uplink_.push(*processed, now_ms);
    return processed;
}

std::optional<Update> Agent::periodic_status_update(std::int64_t now_ms) {
    if (next_status_ms_ > now_ms) {
        return std::nullopt;
    }
    while (next_status_ms_ <= now_ms) {
        next_status_ms_ += config_.status_interval_ms;
    }
    Branch status;
    if (health_.state().mode == Mode::SafeMode) {
        status.emplace("mode", Value("safe"));
    } else {
        const auto& act = gate_.actuators();
        status.emplace("led1", Value(act.current_led1));
        status.emplace("led2", Value(act.current_led2));
        status.emplace("mode", Value(to_string(health_.state().mode)));
        if (latest_) {
            status.emplace("temperature", Value(latest_->temperature_c));
            status.emplace("humidity", Value(latest_->humidity_pct));
            status.emplace("distance", Value(latest_->distance_cm));
        }
    }
    return Update{{UpdateOp{"/metadata/status", Value(std::move(status))}}};
}

std::vector<RecoveryAction> Agent::monitor_health(std::int64_t now_ms) {
    HealthObservation obs;
    obs.link_ok = link_ == LinkState::Online;
    obs.sync_ok = now_ms - last_server_contact_ms_ <= config_.sync_timeout_ms;
    obs.sensor_ok = filter_.state().sensor_ok;
    obs.buffer_ok = !uplink_.near_full(config_.buffer_alarm_fraction);
    const auto actions = health_.check(obs);
    for (const auto a : actions) {
        note(now_ms, a == RecoveryAction::EnterSafeMode ? ActionKind::Mode : ActionKind::Recovery,
             std::string(to_string(a)) + " (attempt " + std::to_string(health_.state().consecutive_failures) + ")");
        switch (a) {
        case RecoveryAction::Reconnect:
            if (link_ == LinkState::Online) {
                link_down(now_ms, "health check");
            }
            break;
        case RecoveryAction::Resync:
            if (link_ == LinkState::Online) {
                send(Ping{}, Purpose::Heartbeat, now_ms);
            }
            break;
        case RecoveryAction::RecalibrateSensors:
            break; // the filter already substitutes last valid readings
        case RecoveryAction::FlushBuffer:
            if (link_ == LinkState::Online) {
                uplink_.resume(now_ms);
            }
            break;
        case RecoveryAction::EnterSafeMode:
            ++counters_.safe_mode_entries;
            break;
        case RecoveryAction::ScheduleReset:
            reset_at_ms_ = now_ms + config_.reset_delay_ms;
            break;
        }
    }
    return actions;
}

std::vector<Effect> Agent::step(std::int64_t now_ms) {
    std::vector<Effect> effects;
    effects_ = &effects;

    while (!inbox_.empty()) {
        auto [msg, recv_ms] = std::move(inbox_.front());
        inbox_.pop_front();
        process(msg, recv_ms, now_ms);
    }
    if (reset_at_ms_ && *reset_at_ms_ <= now_ms) {
        full_reset(now_ms);
    }
    run_connection(now_ms);

    while (sampling_ && next_sample_ms_ <= now_ms) {
        acquire(next_sample_ms_);
        next_sample_ms_ += config_.sample_period_ms;
    }
    run_uplink(now_ms);

    if (auto status = periodic_status_update(now_ms)) {
        if (link_ == LinkState::Online) {
            ++counters_.status_updates;
            send(std::move(*status), Purpose::Status, now_ms);
        }
    }
    run_heartbeat(now_ms);
    while (next_health_ms_ <= now_ms) {
        monitor_health(now_ms);
        next_health_ms_ += config_.health_interval_ms;
    }

    // Forget requests whose answer can no longer matter.
    for (auto it = pending_.begin(); it != pending_.end();) {
        const bool keep = it->second.purpose == Purpose::Auth || it->second.purpose == Purpose::Heartbeat ||
                          it->second.purpose == Purpose::Probe;
        if (!keep && now_ms - it->second.sent_local_ms > config_.ack_timeout_ms) {
            it = pending_.erase(it);
        } else if (keep && now_ms - it->second.sent_local_ms > 4 * config_.ack_timeout_ms) {
            it = pending_.erase(it);
        } else {
            ++it;
        }
    }

    effects_ = nullptr;
    return effects;
}

std::optional<std::int64_t> Agent::next_wakeup() const {
    if (!started_) {
        return std::nullopt;
    }
    std::int64_t t = std::min(next_status_ms_, next_health_ms_);
    if (sampling_) {
        t = std::min(t, next_sample_ms_);
    }
    if (reset_at_ms_) {
        t = std::min(t, *reset_at_ms_);
    }
    switch (link_) {
    case LinkState::Connecting:
        if (connect_at_) {
            t = std::min(t, *connect_at_);
        }
        break;
    case LinkState::Reconnecting:
        t = std::min(t, next_probe_ms_);
        break;
    case LinkState::Online:
        t = std::min(t, next_heartbeat_ms_);
        for (const auto& sub : subscriptions_) {
            if (!sub.active) {
                t = std::min(t, sub.retry_at_ms);
            }
        }
        for (const auto& [target, ack] : acks_) {
            t = std::min(t, ack.retry_at_ms);
        }
        if (heartbeat_msg_) {
            if (const auto it = pending_.find(*heartbeat_msg_); it != pending_.end()) {
                t = std::min(t, it->second.sent_local_ms + config_.ack_timeout_ms);
            }
        }
        break;
    }
    if (health_.state().mode != Mode::SafeMode) {
        if (const auto u = uplink_.next_wakeup(link_ == LinkState::Online)) {
            t = std::min(t, *u);
        }
    }
    return t;
}

} // namespace rtsync::agent
