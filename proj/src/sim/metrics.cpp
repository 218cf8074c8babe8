#include "rtsync/sim/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

namespace rtsync::sim {

std::int64_t nearest_rank(const std::vector<std::int64_t>& sorted, double p) {
    const auto n = sorted.size();
    auto rank = static_cast<std::size_t>(std::ceil(p * static_cast<double>(n)));
    rank = std::clamp<std::size_t>(rank, 1, n);
    return sorted[rank - 1];
}

LatencyStats measure_control_latency(const std::vector<CommandRecord>& commands) {
    LatencyStats s;
    for (const auto& c : commands) {
        if (c.outcome == agent::CommandOutcome::Accepted && c.applied_ms) {
            s.samples.push_back(*c.applied_ms - c.issued_ms);
        }
    }
    std::sort(s.samples.begin(), s.samples.end());
    s.count = s.samples.size();
    if (s.count == 0) {
        return s;
    }
    const auto sum = std::accumulate(s.samples.begin(), s.samples.end(), std::int64_t{0});
    s.mean_ms = static_cast<double>(sum) / static_cast<double>(s.count);
    s.p50_ms = static_cast<double>(nearest_rank(s.samples, 0.50));
    s.p95_ms = static_cast<double>(nearest_rank(s.samples, 0.95));
    s.max_ms = static_cast<double>(s.samples.back());
    return s;
}

nlohmann::ordered_json to_json(const MetricsReport& r) {
    using oj = nlohmann::ordered_json;
    auto opt = [](const std::optional<std::int64_t>& v) { return v ? oj(*v) : oj(nullptr); };
    oj latency;
    latency["count"] = r.control_latency.count;
    if (r.control_latency.count > 0) {
        latency["mean_ms"] = r.control_latency.mean_ms;
        latency["p50_ms"] = r.control_latency.p50_ms;
        latency["p95_ms"] = r.control_latency.p95_ms;
        latency["max_ms"] = r.control_latency.max_ms;
    } else {
        latency["mean_ms"] = nullptr;
        latency["p50_ms"] = nullptr;
        latency["p95_ms"] = nullptr;
        latency["max_ms"] = nullptr;
    }
    oj recovery = oj::array();
    for (const auto& rec : r.recovery) {
        oj item;
        item["start_ms"] = rec.window.start_ms;
        item["end_ms"] = rec.window.end_ms;
        item["recovery_time_ms"] = opt(rec.recovery_time_ms);
        item["after_end_ms"] = opt(rec.after_end_ms);
        recovery.push_back(std::move(item));
    }

    oj j;
    j["experiment"] = r.experiment;
    j["seed"] = r.seed;
    j["duration_ms"] = r.duration_ms;
    j["first_pass_success_rate"] = r.first_pass_success_rate;
    j["eventual_delivery_rate"] = r.eventual_delivery_rate;
    j["sensor_update_hz"] = r.sensor_update_hz;
    j["frames_produced"] = r.frames_produced;
    j["frames_delivered"] = r.frames_delivered;
    j["frames_first_pass"] = r.frames_first_pass;
    j["frames_buffered"] = r.frames_buffered;
    j["frames_dropped"] = r.frames_dropped;
    j["frames_pending"] = r.frames_pending;
    j["commands_issued"] = r.commands_issued;
    j["commands_accepted"] = r.commands_accepted;
    j["commands_rejected_stale"] = r.commands_rejected_stale;
    j["commands_rejected_replay"] = r.commands_rejected_replay;
    j["commands_rejected_by_server"] = r.commands_rejected_by_server;
    j["commands_unresolved"] = r.commands_unresolved;
    j["control_latency"] = std::move(latency);
    j["recovery"] = std::move(recovery);
    j["subscribers"] = r.subscribers;
    j["subscriber_events"] = r.subscriber_events;
    j["event_loss_count"] = r.event_loss_count;
    j["event_order_violations"] = r.event_order_violations;
    j["event_duplicates"] = r.event_duplicates;
    j["commits"] = r.commits;
    j["safe_mode_entries"] = r.safe_mode_entries;
    j["resets"] = r.resets;
    j["reconnects"] = r.reconnects;
    j["link_failures"] = r.link_failures;
    j["conservation_checks"] = r.conservation_checks;
    j["conservation_violations"] = r.conservation_violations;
    return j;
}

namespace {

std::string fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

} // namespace

std::string render_table(const MetricsReport& r) {
    std::string recovery = "n/a";
    std::int64_t total = 0;
    std::size_t n = 0;
    bool all_recovered = true;
    for (const auto& rec : r.recovery) {
        if (rec.recovery_time_ms) {
            total += *rec.recovery_time_ms;
            ++n;
        } else {
            all_recovered = false;
        }
    }
    if (n > 0) {
        recovery = fixed(static_cast<double>(total) / static_cast<double>(n) / 1000.0, 2);
        if (!all_recovered) {
            recovery += "*";
        }
    } else if (!r.recovery.empty()) {
        recovery = "never";
    }
    const std::string latency =
        r.control_latency.count > 0 ? fixed(r.control_latency.mean_ms / 1000.0, 2) : std::string("n/a");

    struct Row {
        const char* metric;
        const char* target;
        std::string measured;
        const char* unit;
    };
    const Row rows[] = {
        {"Data Transmission Success", "99.0", fixed(r.first_pass_success_rate * 100.0, 2), "%"},
        {"Control Command Latency", "<2.0", latency, "seconds"},
        {"Sensor Update Frequency", "1.0", fixed(r.sensor_update_hz, 2), "Hz"},
        {"Network Recovery Time", "<10", recovery, "seconds"},
    };
    std::string out;
    char line[160];
    std::snprintf(line, sizeof line, "%-28s %-8s %-10s %s\n", "Metric", "Target", "Measured", "Unit");
    out += line;
    for (const auto& row : rows) {
        std::snprintf(line, sizeof line, "%-28s %-8s %-10s %s\n", row.metric, row.target, row.measured.c_str(),
                      row.unit);
        out += line;
    }
    out += "\n";
    std::snprintf(line, sizeof line, "frames: produced %llu, delivered %llu, first-pass %llu, buffered %llu, dropped %llu\n",
                  static_cast<unsigned long long>(r.frames_produced), static_cast<unsigned long long>(r.frames_delivered),
                  static_cast<unsigned long long>(r.frames_first_pass),
                  static_cast<unsigned long long>(r.frames_buffered), static_cast<unsigned long long>(r.frames_dropped));
    out += line;
    std::snprintf(line, sizeof line, "eventual delivery %.4f; latency p50 %s ms, p95 %s ms over %zu commands\n",
                  r.eventual_delivery_rate, fixed(r.control_latency.p50_ms, 0).c_str(),
                  fixed(r.control_latency.p95_ms, 0).c_str(), r.control_latency.count);
    out += line;
    std::snprintf(line, sizeof line, "events: %llu to %u subscribers, lost %llu, out of order %llu\n",
                  static_cast<unsigned long long>(r.subscriber_events), r.subscribers,
                  static_cast<unsigned long long>(r.event_loss_count),
                  static_cast<unsigned long long>(r.event_order_violations));
    out += line;
    return out;
}

} // namespace rtsync::sim
