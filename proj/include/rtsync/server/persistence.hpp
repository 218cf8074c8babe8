#pragma once

#include "rtsync/datatree/tree.hpp"
#include "rtsync/result.hpp"

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace rtsync::server {

struct CommitRecord {
    datatree::Revision revision;
    std::int64_t server_time_ms = 0;
    std::vector<datatree::WriteOp> ops;

    friend bool operator==(const CommitRecord&, const CommitRecord&) = default;
};

std::string encode_record(const CommitRecord& r);
Result<CommitRecord, std::string> decode_record(std::string_view line);

enum class RecoveryError {
    CorruptRecord,
    MalformedSnapshot,
};

struct RecoveryFailure {
    RecoveryError code = RecoveryError::CorruptRecord;
    std::string detail;
};

struct Recovered {
    datatree::Tree tree;
    std::vector<CommitRecord> records; // replayed, in order
    bool dropped_partial_tail = false;
};

// Rebuilds the tree from an optional snapshot document and the log text.
// Only newline-terminated records count; an unterminated tail is dropped.
// A malformed terminated record, or a revision gap, is CorruptRecord.
Result<Recovered, RecoveryFailure> replay(std::optional<std::string_view> snapshot, std::string_view log);

// On-disk layout: <dir>/snapshot.json (canonical document) and <dir>/log.jsonl
// (a {"base":N} header line followed by one record per line).
class CommitLog {
public:
    static constexpr const char* kSnapshotFile = "snapshot.json";
    static constexpr const char* kLogFile = "log.jsonl";

    // Opens the directory for appending; call recover() first to get the state.
    CommitLog(std::filesystem::path dir, std::size_t checkpoint_every);

    static Result<Recovered, RecoveryFailure> recover(const std::filesystem::path& dir);

    void append(const CommitRecord& record);
    // Writes a fresh snapshot and starts a new log whose base is tree.revision().
    void checkpoint(const datatree::Tree& tree);
    // append() plus a checkpoint every `checkpoint_every` records.
    void on_commit(const CommitRecord& record, const datatree::Tree& tree);

    const std::filesystem::path& dir() const noexcept { return dir_; }

private:
    void open_for_append();

    std::filesystem::path dir_;
    std::size_t checkpoint_every_;
    std::size_t since_checkpoint_ = 0;
    std::ofstream out_;
};

} // namespace rtsync::server
