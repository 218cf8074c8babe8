#include "rtsync/cli/cli.hpp"

#include "rtsync/agent/agent.hpp"
#include "rtsync/agent/config.hpp"
#include "rtsync/datatree/path.hpp"
#include "rtsync/datatree/snapshot.hpp"
#include "rtsync/net/client.hpp"
#include "rtsync/net/live_agent.hpp"
#include "rtsync/net/net_server.hpp"
#include "rtsync/server/persistence.hpp"
#include "rtsync/sim/experiment.hpp"
#include "rtsync/sim/sensors.hpp"
#include "rtsync/util/iso_time.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <fstream>
#include <optional>
#include <thread>

namespace rtsync::cli {

namespace {

using nlohmann::json;
using server::WireMessage;
using std::chrono::milliseconds;

struct Globals {
    std::string server = "127.0.0.1:7070";
    std::string token;
    std::string config;
    bool json = false;
    std::optional<std::uint64_t> seed;
    std::int64_t timeout_ms = 5000;
};

struct Io {
    std::ostream& out;
    std::ostream& err;
    const std::atomic<bool>& interrupt;
};

int exit_for(server::ErrCode code) {
    switch (code) {
    case server::ErrCode::AuthRequired:
    case server::ErrCode::Denied: return kDenied;
    case server::ErrCode::BadPath:
    case server::ErrCode::OverlappingPaths:
    case server::ErrCode::UnknownSub:
    case server::ErrCode::Malformed: return kMalformed;
    }
    return kFailure;
}

int report_client_error(const Io& io, const Globals& g, const net::ClientError& e) {
    if (g.json) {
        io.out << json{{"ok", false}, {"code", "TRANSPORT"}, {"reason", e.detail}}.dump() << '\n';
    } else {
        io.err << "transport error: " << e.detail << '\n';
    }
    return kTransport;
}

int report_err(const Io& io, const Globals& g, const server::Err& e) {
    if (g.json) {
        io.out << json{{"ok", false}, {"code", server::to_string(e.code)}, {"reason", e.reason}}.dump() << '\n';
    } else {
        io.out << server::to_string(e.code) << ' ' << e.reason << '\n';
    }
    return exit_for(e.code);
}

int malformed(const Io& io, const std::string& what) {
    io.err << "error: " << what << '\n';
    return kMalformed;
}

json value_json(const std::optional<datatree::Value>& v) {
    // Canonical text keeps integral numbers integral ("3", not "3.0").
    return v ? json::parse(datatree::canonical_json(*v)) : json(nullptr);
}

std::string value_text(const std::optional<datatree::Value>& v) {
    return v ? datatree::canonical_json(*v) : std::string("null");
}

// Connects and authenticates. On failure the exit code is returned instead.
struct Session {
    std::optional<net::Client> client;
    int failure = kOk;
};

Session open_session(const Io& io, const Globals& g) {
    Session s;
    auto ep = net::parse_endpoint(g.server);
    if (!ep) {
        s.failure = malformed(io, ep.error());
        return s;
    }
    auto client = net::Client::connect(*ep, milliseconds(g.timeout_ms));
    if (!client) {
        s.failure = report_client_error(io, g, client.error());
        return s;
    }
    if (!g.token.empty()) {
        auto reply = client->request(server::Auth{g.token}, milliseconds(g.timeout_ms));
        if (!reply) {
            s.failure = report_client_error(io, g, reply.error());
            return s;
        }
        if (const auto* e = reply->as<server::Err>()) {
            s.failure = report_err(io, g, *e);
            return s;
        }
    }
    s.client = std::move(client).value();
    return s;
}

std::optional<std::string> check_path(const std::string& text) {
    auto p = datatree::Path::parse(text);
    if (!p) {
        return std::string("invalid path '") + text + "': " + datatree::to_string(p.error());
    }
    return std::nullopt;
}

int cmd_get(const Io& io, const Globals& g, const std::string& path) {
    if (auto bad = check_path(path)) {
        return malformed(io, *bad);
    }
    auto s = open_session(io, g);
    if (!s.client) {
        return s.failure;
    }
    auto reply = s.client->request(server::Get{path}, milliseconds(g.timeout_ms));
    if (!reply) {
        return report_client_error(io, g, reply.error());
    }
    if (const auto* e = reply->as<server::Err>()) {
        return report_err(io, g, *e);
    }
    const auto& ack = *reply->as<server::Ack>();
    if (g.json) {
        io.out << json{{"ok", true}, {"path", path}, {"revision", ack.revision.value_or(0)}, {"value", value_json(ack.value)}}
                      .dump()
               << '\n';
    } else {
        io.out << value_text(ack.value) << '\n';
    }
    return kOk;
}

int print_write_ack(const Io& io, const Globals& g, const server::Ack& ack, const std::string& human) {
    if (g.json) {
        io.out << json{{"ok", true}, {"revision", ack.revision.value_or(0)}, {"server_time_ms", ack.server_time_ms}}.dump()
               << '\n';
    } else {
        io.out << human << "ACK revision " << ack.revision.value_or(0) << '\n';
    }
    return kOk;
}

int cmd_put(const Io& io, const Globals& g, const std::string& path, const std::string& value_text_in) {
    if (auto bad = check_path(path)) {
        return malformed(io, *bad);
    }
    std::optional<datatree::Value> value;
    if (value_text_in != "null") {
        auto parsed = datatree::parse_value(value_text_in);
        if (!parsed) {
            return malformed(io, "invalid value '" + value_text_in + "': " + parsed.error().detail);
        }
        value = std::move(parsed).value();
    }
    auto s = open_session(io, g);
    if (!s.client) {
        return s.failure;
    }
    const auto now = std::chrono::duration_cast<milliseconds>(std::chrono::system_clock::now().time_since_epoch());
    auto reply = s.client->request(server::Put{path, value, now.count()}, milliseconds(g.timeout_ms));
    if (!reply) {
        return report_client_error(io, g, reply.error());
    }
    if (const auto* e = reply->as<server::Err>()) {
        return report_err(io, g, *e);
    }
    return print_write_ack(io, g, *reply->as<server::Ack>(), "");
}

int cmd_toggle(const Io& io, const Globals& g, const std::string& target) {
    if (target != "led1" && target != "led2") {
        return malformed(io, "toggle target must be led1 or led2, got '" + target + "'");
    }
    const std::string path = "/leds/" + target;
    auto s = open_session(io, g);
    if (!s.client) {
        return s.failure;
    }
    auto current = s.client->request(server::Get{path}, milliseconds(g.timeout_ms));
    if (!current) {
        return report_client_error(io, g, current.error());
    }
    if (const auto* e = current->as<server::Err>()) {
        return report_err(io, g, *e);
    }
    const auto& value = current->as<server::Ack>()->value;
    const bool next = !(value && value->is_bool() && value->as_bool());
    const auto now = std::chrono::duration_cast<milliseconds>(std::chrono::system_clock::now().time_since_epoch());
    auto reply = s.client->request(server::Put{path, datatree::Value(next), now.count()}, milliseconds(g.timeout_ms));
    if (!reply) {
        return report_client_error(io, g, reply.error());
    }
    if (const auto* e = reply->as<server::Err>()) {
        return report_err(io, g, *e);
    }
    const auto& ack = *reply->as<server::Ack>();
    if (g.json) {
        io.out << json{{"ok", true}, {"target", target}, {"value", next}, {"revision", ack.revision.value_or(0)}}.dump()
               << '\n';
    } else {
        io.out << target << " = " << (next ? "true" : "false") << " (revision " << ack.revision.value_or(0) << ")\n";
    }
    return kOk;
}

int cmd_watch(const Io& io, const Globals& g, const std::string& path, std::uint64_t count) {
    if (auto bad = check_path(path)) {
        return malformed(io, *bad);
    }
    auto s = open_session(io, g);
    if (!s.client) {
        return s.failure;
    }
    auto reply = s.client->request(server::Subscribe{path}, milliseconds(g.timeout_ms));
    if (!reply) {
        return report_client_error(io, g, reply.error());
    }
    if (const auto* e = reply->as<server::Err>()) {
        return report_err(io, g, *e);
    }
    const auto sub_id = reply->as<server::Ack>()->sub_id;
    std::uint64_t seen = 0;
    auto next_ping = std::chrono::steady_clock::now() + std::chrono::seconds(5);
    while (!io.interrupt && (count == 0 || seen < count)) {
        // Keeps the session alive through quiet periods.
        if (std::chrono::steady_clock::now() >= next_ping) {
            if (auto sent = s.client->send(server::Ping{}); !sent) {
                return report_client_error(io, g, sent.error());
            }
            next_ping += std::chrono::seconds(5);
        }
        auto msg = s.client->next_message(milliseconds(200));
        if (!msg) {
            return report_client_error(io, g, msg.error());
        }
        if (!*msg) {
            continue;
        }
        const auto* ev = (*msg)->as<server::Event>();
        if (!ev || ev->sub_id != sub_id) {
            continue;
        }
        ++seen;
        if (g.json) {
            io.out << server::encode(**msg) << '\n';
        } else {
            io.out << "revision " << ev->revision << ' ' << ev->path << ' ' << value_text(ev->value) << '\n';
        }
        io.out.flush();
    }
    return kOk;
}

int cmd_dump_log(const Io& io, const Globals& g, const std::string& dir, std::uint64_t since) {
    if (!std::filesystem::is_directory(dir)) {
        return malformed(io, "no such data directory: " + dir);
    }
    auto recovered = server::CommitLog::recover(dir);
    if (!recovered) {
        io.err << "error: " << recovered.error().detail << '\n';
        return kFailure;
    }
    for (const auto& r : recovered->records) {
        if (r.revision.value <= since) {
            continue;
        }
        if (g.json) {
            io.out << server::encode_record(r) << '\n';
            continue;
        }
        io.out << "revision " << r.revision.value << ' ' << util::format_iso8601_ms(r.server_time_ms) << '\n';
        for (const auto& op : r.ops) {
            io.out << "  " << (op.is_delete() ? "delete " : "set ") << op.path.str();
            if (!op.is_delete()) {
                io.out << ' ' << datatree::canonical_json(*op.value);
            }
            io.out << '\n';
        }
    }
    return kOk;
}

int cmd_sim(const Io& io, const Globals& g, const std::string& config_file, const std::string& report_file,
            const std::string& trace_file) {
    sim::ExperimentConfig cfg;
    try {
        cfg = sim::load_experiment_config(config_file);
    } catch (const std::exception& e) {
        return malformed(io, e.what());
    }
    if (g.seed) {
        cfg.seed = *g.seed;
    }
    if (!trace_file.empty()) {
        cfg.trace = true;
    }
    auto result = sim::run_experiment(cfg);
    if (!result) {
        return malformed(io, result.error().reason);
    }
    const auto report = sim::to_json(result->report).dump(1);
    if (!report_file.empty()) {
        std::ofstream f(report_file);
        f << report << '\n';
        if (!f) {
            io.err << "error: cannot write " << report_file << '\n';
            return kFailure;
        }
    }
    if (!trace_file.empty()) {
        std::ofstream f(trace_file);
        f << result->trace;
        if (!f) {
            io.err << "error: cannot write " << trace_file << '\n';
            return kFailure;
        }
    }
    if (g.json) {
        io.out << report << '\n';
    } else {
        io.out << sim::render_table(result->report);
    }
    return kOk;
}

struct ServeFlags {
    std::string listen;
    std::string ws_listen;
    std::string data_dir;
};

int cmd_serve(const Io& io, const Globals& g, const ServeFlags& flags) {
    net::NetServerOptions options;
    try {
        net::ServerFileConfig file;
        if (!g.config.empty()) {
            file = net::load_server_config(g.config);
        }
        if (!flags.listen.empty()) {
            file.listen = flags.listen;
        }
        if (!flags.ws_listen.empty()) {
            file.ws_listen = flags.ws_listen == "off" ? std::nullopt : std::optional(flags.ws_listen);
        }
        if (!flags.data_dir.empty()) {
            file.data_dir = flags.data_dir;
        }
        options = net::options_from_config(file);
    } catch (const std::exception& e) {
        return malformed(io, e.what());
    }
    net::NetServer srv(std::move(options));
    try {
        srv.start();
    } catch (const std::exception& e) {
        io.err << "error: " << e.what() << '\n';
        return kFailure;
    }
    if (g.json) {
        json j{{"listening", srv.port()}};
        if (const auto ws = srv.ws_port()) {
            j["ws"] = *ws;
        }
        io.out << j.dump() << '\n';
    } else {
        io.out << "listening on port " << srv.port();
        if (const auto ws = srv.ws_port()) {
            io.out << ", websocket on port " << *ws;
        }
        io.out << '\n';
    }
    io.out.flush();
    while (!io.interrupt) {
        std::this_thread::sleep_for(milliseconds(100));
    }
    srv.stop();
    return kOk;
}

class ConsoleActuator : public agent::Actuator {
public:
    void set(std::string_view, bool) override {} // reported through effects
};

int cmd_agent(const Io& io, const Globals& g, std::int64_t duration_ms, const std::string& sensors_file,
              std::vector<std::string> overrides_present) {
    agent::AgentConfig cfg;
    sim::SensorModel model;
    try {
        if (!g.config.empty()) {
            cfg = agent::load_agent_config(g.config);
        }
        if (!sensors_file.empty()) {
            std::ifstream in(sensors_file);
            if (!in) {
                return malformed(io, "cannot read " + sensors_file);
            }
            model = sim::sensor_model_from_json(json::parse(in));
        }
    } catch (const std::exception& e) {
        return malformed(io, e.what());
    }
    for (const auto& o : overrides_present) {
        if (o == "server") {
            cfg.server = g.server;
        } else if (o == "token") {
            cfg.token = g.token;
        }
    }
    auto ep = net::parse_endpoint(cfg.server);
    if (!ep) {
        return malformed(io, ep.error());
    }
    std::ofstream action_log;
    const auto start = std::chrono::duration_cast<milliseconds>(std::chrono::system_clock::now().time_since_epoch());
    sim::SyntheticSensors sensors(model, sim::Rng::stream(g.seed.value_or(1), 0), start.count());
    ConsoleActuator actuator;
    net::LiveTransport transport(*ep);
    agent::Agent a(cfg, transport, sensors, &actuator);
    if (!cfg.action_log.empty()) {
        action_log.open(cfg.action_log, std::ios::app);
        if (!action_log) {
            io.err << "error: cannot open " << cfg.action_log << '\n';
            return kFailure;
        }
        a.log().set_sink(&action_log);
    }
    a.log().set_retain(false);
    net::LiveAgentOptions options;
    if (duration_ms > 0) {
        options.duration_ms = duration_ms;
    }
    net::run_live_agent(a, transport, io.interrupt, options, g.json ? nullptr : &io.out);
    const auto& u = a.uplink().counters();
    if (g.json) {
        io.out << json{{"produced", u.produced}, {"delivered", u.delivered}, {"dropped", u.dropped},
                       {"pending", a.uplink().size()}, {"commands_accepted", a.counters().commands_accepted}}
                      .dump()
               << '\n';
    } else {
        io.out << "frames: produced " << u.produced << ", delivered " << u.delivered << ", dropped " << u.dropped
               << ", pending " << a.uplink().size() << '\n';
    }
    return kOk;
}

} // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
            const std::atomic<bool>& interrupt) {
    const Io io{out, err, interrupt};
    Globals g;
    CLI::App app{"Realtime sync server, device agent and network simulator", "rtsync"};
    app.fallthrough();
    app.require_subcommand(1);
    auto* server_opt = app.add_option("--server", g.server, "Server address: host:port or ws://host:port/");
    app.add_option("--token", g.token, "Authentication token")->envname("RTSYNC_TOKEN");
    app.add_option("--config", g.config, "Config file (serve: server config, agent: agent config)");
    app.add_flag("--json", g.json, "Machine-readable output");
    app.add_option("--timeout-ms", g.timeout_ms, "Per-request timeout")->check(CLI::PositiveNumber);

    ServeFlags serve_flags;
    auto* serve = app.add_subcommand("serve", "Run the server until interrupted");
    serve->add_option("--listen", serve_flags.listen, "TCP listen address");
    serve->add_option("--ws-listen", serve_flags.ws_listen, "WebSocket listen address, or 'off'");
    serve->add_option("--data-dir", serve_flags.data_dir, "Persistence directory");

    std::int64_t duration_ms = 0;
    std::string sensors_file;
    auto* agent_cmd = app.add_subcommand("agent", "Run a device agent with synthetic sensors against a server");
    agent_cmd->add_option("--duration-ms", duration_ms, "Stop after this long (default: until interrupted)");
    agent_cmd->add_option("--sensors", sensors_file, "Synthetic sensor model (JSON)");
    agent_cmd->add_option("--seed", g.seed, "Sensor noise seed");

    std::string sim_config;
    std::string report_file;
    std::string trace_file;
    auto* sim_cmd = app.add_subcommand("sim", "Run a simulated experiment");
    sim_cmd->add_option("experiment", sim_config, "Experiment config (JSON)")->required();
    sim_cmd->add_option("--report", report_file, "Write the metrics report here");
    sim_cmd->add_option("--trace", trace_file, "Write the message trace (JSONL) here");
    sim_cmd->add_option("--seed", g.seed, "Override the experiment seed");

    std::string path;
    auto* get = app.add_subcommand("get", "Read a value");
    get->add_option("path", path)->required();

    std::string value;
    auto* put = app.add_subcommand("put", "Write a JSON value (null deletes)");
    put->add_option("path", path)->required();
    put->add_option("value", value)->required();

    std::string target;
    auto* toggle = app.add_subcommand("toggle", "Flip an LED");
    toggle->add_option("target", target, "led1 or led2")->required();

    std::uint64_t count = 0;
    auto* watch = app.add_subcommand("watch", "Stream change events until interrupted");
    watch->add_option("path", path)->required();
    watch->add_option("--count", count, "Exit after this many events");

    std::string data_dir;
    std::uint64_t since = 0;
    auto* dump = app.add_subcommand("dump-log", "Print persisted commits");
    dump->add_option("--data-dir", data_dir, "Persistence directory")->required();
    dump->add_option("--since", since, "Only commits after this revision");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return kOk;
    } catch (const CLI::CallForAllHelp& e) {
        out << app.help("", CLI::AppFormatMode::All);
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return kMalformed;
    }

    try {
        if (serve->parsed()) {
            return cmd_serve(io, g, serve_flags);
        }
        if (agent_cmd->parsed()) {
            std::vector<std::string> overrides;
            if (server_opt->count() > 0) {
                overrides.emplace_back("server");
            }
            if (!g.token.empty()) { // flag or environment
                overrides.emplace_back("token");
            }
            return cmd_agent(io, g, duration_ms, sensors_file, overrides);
        }
        if (sim_cmd->parsed()) {
            return cmd_sim(io, g, sim_config, report_file, trace_file);
        }
        if (get->parsed()) {
            return cmd_get(io, g, path);
        }
        if (put->parsed()) {
            return cmd_put(io, g, path, value);
        }
        if (toggle->parsed()) {
            return cmd_toggle(io, g, target);
        }
        if (watch->parsed()) {
            return cmd_watch(io, g, path, count);
        }
        if (dump->parsed()) {
            return cmd_dump_log(io, g, data_dir, since);
        }
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kFailure;
    }
    return kMalformed;
}

} // namespace rtsync::cli
