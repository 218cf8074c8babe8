#include "rtsync/server/persistence.hpp"

#include "rtsync/datatree/json_value.hpp"
#include "rtsync/datatree/snapshot.hpp"

#include <json.hpp>

#include <sstream>
#include <stdexcept>

namespace rtsync::server {

using datatree::Path;
using datatree::Revision;
using datatree::Tree;
using datatree::WriteOp;
using json = nlohmann::json;

std::string encode_record(const CommitRecord& r) {
    std::string out = "{\"ops\":[";
    bool first = true;
    for (const auto& op : r.ops) {
        if (!first) {
            out += ',';
        }
        first = false;
        out += "{\"path\":";
        datatree::append_json_string(op.path.str(), out);
        out += ",\"value\":";
        if (op.value) {
            datatree::append_canonical_json(*op.value, out);
        } else {
            out += "null";
        }
        out += '}';
    }
    out += "],\"rev\":" + std::to_string(r.revision.value) + ",\"time\":" + std::to_string(r.server_time_ms) + "}";
    return out;
}

Result<CommitRecord, std::string> decode_record(std::string_view line) {
    const json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
        return fail(std::string("not a JSON object"));
    }
    const auto rev = j.find("rev");
    const auto time = j.find("time");
    const auto ops = j.find("ops");
    if (rev == j.end() || !rev->is_number_unsigned() || time == j.end() || !time->is_number_integer() ||
        ops == j.end() || !ops->is_array()) {
        return fail(std::string("missing or mistyped rev/time/ops"));
    }
    CommitRecord r{Revision{rev->get<std::uint64_t>()}, time->get<std::int64_t>(), {}};
    for (const auto& op : *ops) {
        if (!op.is_object() || !op.contains("path") || !op["path"].is_string() || !op.contains("value")) {
            return fail(std::string("malformed op"));
        }
        auto path = Path::parse(op["path"].get<std::string>());
        if (!path) {
            return fail(std::string("bad path in op"));
        }
        if (op["value"].is_null()) {
            r.ops.push_back(WriteOp::remove(std::move(path).value()));
        } else {
            auto v = datatree::value_from_json(op["value"]);
            if (!v) {
                return fail(v.error());
            }
            r.ops.push_back(WriteOp::set(std::move(path).value(), std::move(v).value()));
        }
    }
    return r;
}

Result<Recovered, RecoveryFailure> replay(std::optional<std::string_view> snapshot, std::string_view log) {
    Recovered out;
    if (snapshot) {
        auto restored = datatree::restore_snapshot(*snapshot);
        if (!restored) {
            return fail(RecoveryFailure{RecoveryError::MalformedSnapshot, restored.error().detail});
        }
        out.tree = std::move(restored).value();
    }

    std::size_t pos = 0;
    std::size_t line_no = 0;
    bool header_seen = false;
    while (pos < log.size()) {
        const std::size_t nl = log.find('\n', pos);
        if (nl == std::string_view::npos) {
            out.dropped_partial_tail = true;
            break;
        }
        const std::string_view line = log.substr(pos, nl - pos);
        pos = nl + 1;
        ++line_no;
        if (line.empty()) {
            continue;
        }
        if (!header_seen && out.records.empty()) {
            header_seen = true;
            const json h = json::parse(line, nullptr, false);
            if (h.is_object() && h.contains("base")) {
                if (!h["base"].is_number_unsigned()) {
                    return fail(RecoveryFailure{RecoveryError::CorruptRecord, "bad log header"});
                }
                out.tree = Tree(out.tree.root(), Revision{h["base"].get<std::uint64_t>()});
                continue;
            }
        }
        auto rec = decode_record(line);
        if (!rec) {
            return fail(RecoveryFailure{RecoveryError::CorruptRecord,
                                        "line " + std::to_string(line_no) + ": " + rec.error()});
        }
        // A crash between replacing the snapshot and rotating the log leaves an
        // old log over a newer snapshot. Re-applying a set/delete sequence on
        // top of its own result is a no-op, so that case replays correctly.
        if (rec->revision != out.tree.revision().next()) {
            return fail(RecoveryFailure{RecoveryError::CorruptRecord,
                                        "line " + std::to_string(line_no) + ": revision gap"});
        }
        auto committed = out.tree.commit(rec->ops, rec->server_time_ms);
        if (!committed) {
            return fail(RecoveryFailure{RecoveryError::CorruptRecord,
                                        "line " + std::to_string(line_no) + ": " + to_string(committed.error())});
        }
        out.records.push_back(std::move(rec).value());
    }
    return out;
}

namespace {

std::optional<std::string> read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) {
        return std::nullopt;
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file_atomic(const std::filesystem::path& p, const std::string& content) {
    auto tmp = p;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw std::runtime_error("cannot write " + tmp.string());
        }
        out << content;
        out.flush();
        if (!out) {
            throw std::runtime_error("write failed for " + tmp.string());
        }
    }
    std::filesystem::rename(tmp, p);
}

} // namespace

CommitLog::CommitLog(std::filesystem::path dir, std::size_t checkpoint_every)
    : dir_(std::move(dir)), checkpoint_every_(checkpoint_every) {
    std::filesystem::create_directories(dir_);
    open_for_append();
}

Result<Recovered, RecoveryFailure> CommitLog::recover(const std::filesystem::path& dir) {
    const auto snapshot = read_file(dir / kSnapshotFile);
    const auto log = read_file(dir / kLogFile);
    std::optional<std::string_view> snap_view;
    if (snapshot) {
        snap_view = *snapshot;
    }
    return replay(snap_view, log ? std::string_view(*log) : std::string_view());
}

void CommitLog::open_for_append() {
    out_.close();
    out_.open(dir_ / kLogFile, std::ios::binary | std::ios::app);
    if (!out_) {
        throw std::runtime_error("cannot open " + (dir_ / kLogFile).string());
    }
}

void CommitLog::append(const CommitRecord& record) {
    out_ << encode_record(record) << '\n';
    out_.flush();
    if (!out_) {
        throw std::runtime_error("log append failed in " + dir_.string());
    }
}

void CommitLog::checkpoint(const Tree& tree) {
    write_file_atomic(dir_ / kSnapshotFile, datatree::serialize_snapshot(tree));
    out_.close();
    write_file_atomic(dir_ / kLogFile, "{\"base\":" + std::to_string(tree.revision().value) + "}\n");
    open_for_append();
    since_checkpoint_ = 0;
}

void CommitLog::on_commit(const CommitRecord& record, const Tree& tree) {
    append(record);
    if (checkpoint_every_ > 0 && ++since_checkpoint_ >= checkpoint_every_) {
        checkpoint(tree);
    }
}

} // namespace rtsync::server
