#pragma once

#include "rtsync/datatree/path.hpp"
#include "rtsync/datatree/value.hpp"
#include "rtsync/result.hpp"

#include <compare>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <vector>

namespace rtsync::datatree {

// Server-wide commit counter. Starts at 0 (nothing committed) and increases by
// exactly one per committed batch.
struct Revision {
    std::uint64_t value = 0;

    Revision next() const noexcept { return Revision{value + 1}; }
    friend auto operator<=>(const Revision&, const Revision&) = default;
};

struct WriteOp {
    Path path;
    std::optional<Value> value; // nullopt deletes

    static WriteOp set(Path p, Value v) { return WriteOp{std::move(p), std::move(v)}; }
    static WriteOp remove(Path p) { return WriteOp{std::move(p), std::nullopt}; }

    bool is_delete() const noexcept { return !value.has_value(); }
    friend bool operator==(const WriteOp&, const WriteOp&) = default;
};

struct ChangeEvent {
    Revision revision;
    Path path;
    std::optional<Value> new_value;
    std::int64_t server_time_ms = 0;

    friend bool operator==(const ChangeEvent&, const ChangeEvent&) = default;
};

enum class CommitError {
    OverlappingPaths,
    NonFiniteNumber,
    InvalidKey,
    RootNotBranch,
};

const char* to_string(CommitError e);

struct CommitResult {
    Revision revision;
    std::vector<ChangeEvent> events;
};

// Checks a batch without applying it.
std::optional<CommitError> validate_batch(std::span<const WriteOp> batch);

// The document plus its revision. Plain value type: copying yields an
// independent snapshot.
class Tree {
public:
    Tree() = default;
    Tree(Branch root, Revision revision) : root_(std::move(root)), revision_(revision) {}

    std::optional<Value> get(const Path& path) const;
    const Value* find(const Path& path) const;

    // Applies the whole batch or nothing. Every batch that validates consumes
    // exactly one revision, even if it changes nothing.
    Result<CommitResult, CommitError> commit(std::span<const WriteOp> batch, std::int64_t server_time_ms);

    Revision revision() const noexcept { return revision_; }
    const Branch& root() const noexcept { return root_; }
    Value root_value() const { return Value(root_); }
    bool empty() const noexcept { return root_.empty(); }

    friend bool operator==(const Tree& a, const Tree& b) { return a.root_ == b.root_; }

private:
    void apply(const WriteOp& op);

    Branch root_;
    Revision revision_;
};

// Single-writer holder publishing immutable snapshots. Readers call
// snapshot() and may keep the returned tree for as long as they like.
class Store {
public:
    Store() : current_(std::make_shared<const Tree>()) {}
    explicit Store(Tree initial) : current_(std::make_shared<const Tree>(std::move(initial))) {}

    std::shared_ptr<const Tree> snapshot() const;
    Result<CommitResult, CommitError> commit(std::span<const WriteOp> batch, std::int64_t server_time_ms);

private:
    mutable std::mutex read_mutex_;
    std::mutex write_mutex_;
    std::shared_ptr<const Tree> current_;
};

} // namespace rtsync::datatree
