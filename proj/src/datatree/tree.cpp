#include "rtsync/datatree/tree.hpp"

#include <algorithm>

namespace rtsync::datatree {

const char* to_string(CommitError e) {
    switch (e) {
    case CommitError::OverlappingPaths: return "OverlappingPaths";
    case CommitError::NonFiniteNumber: return "NonFiniteNumber";
    case CommitError::InvalidKey: return "InvalidKey";
    case CommitError::RootNotBranch: return "RootNotBranch";
    }
    return "Unknown";
}

std::optional<CommitError> validate_batch(std::span<const WriteOp> batch) {
    std::vector<const Path*> paths;
    paths.reserve(batch.size());
    for (const auto& op : batch) {
        if (op.value) {
            if (!op.value->all_finite()) {
                return CommitError::NonFiniteNumber;
            }
            if (!op.value->keys_valid()) {
                return CommitError::InvalidKey;
            }
            if (op.path.is_root() && !op.value->is_branch()) {
                return CommitError::RootNotBranch;
            }
        }
        paths.push_back(&op.path);
    }
    // After sorting, a prefix sits immediately before its first descendant.
    std::sort(paths.begin(), paths.end(), [](const Path* a, const Path* b) { return *a < *b; });
    for (std::size_t i = 1; i < paths.size(); ++i) {
        if (paths[i - 1]->contains(*paths[i])) {
            return CommitError::OverlappingPaths;
        }
    }
    return std::nullopt;
}

const Value* Tree::find(const Path& path) const {
    const Branch* node = &root_;
    const Value* found = nullptr;
    for (const auto& seg : path.segments()) {
        if (node == nullptr) {
            return nullptr;
        }
        const auto it = node->find(seg);
        if (it == node->end()) {
            return nullptr;
        }
        found = &it->second;
        node = found->is_branch() ? &found->as_branch() : nullptr;
    }
    return found;
}

std::optional<Value> Tree::get(const Path& path) const {
    if (path.is_root()) {
        if (root_.empty()) {
            return std::nullopt;
        }
        return Value(root_);
    }
    if (const Value* v = find(path)) {
        return *v;
    }
    return std::nullopt;
}

namespace {

// Removes the value at segs[0..] below node. Returns true if node became empty.
bool erase_at(Branch& node, std::span<const std::string> segs) {
    const auto it = node.find(segs.front());
    if (it == node.end()) {
        return node.empty();
    }
    if (segs.size() == 1) {
        node.erase(it);
        return node.empty();
    }
    if (!it->second.is_branch()) {
        return node.empty();
    }
    if (erase_at(it->second.as_branch(), segs.subspan(1))) {
        node.erase(it);
    }
    return node.empty();
}

} // namespace

void Tree::apply(const WriteOp& op) {
    std::optional<Value> v = op.value ? pruned(*op.value) : std::nullopt;
    const auto& segs = op.path.segments();

    if (!v) {
        if (segs.empty()) {
            root_.clear();
        } else {
            erase_at(root_, segs);
        }
        return;
    }
    if (segs.empty()) {
        root_ = std::move(v->as_branch());
        return;
    }
    Branch* node = &root_;
    for (std::size_t i = 0; i + 1 < segs.size(); ++i) {
        Value& slot = (*node)[segs[i]];
        if (!slot.is_branch()) {
            slot = Value(Branch{});
        }
        node = &slot.as_branch();
    }
    (*node)[segs.back()] = std::move(*v);
}

Result<CommitResult, CommitError> Tree::commit(std::span<const WriteOp> batch, std::int64_t server_time_ms) {
    if (auto err = validate_batch(batch)) {
        return fail(*err);
    }
    const Revision rev = revision_.next();
    CommitResult result{rev, {}};
    for (const auto& op : batch) {
        const bool existed = find(op.path) != nullptr || (op.path.is_root() && !root_.empty());
        apply(op);
        std::optional<Value> now = get(op.path);
        // Every surviving Set notifies; removals notify only if something was there.
        if (now || existed) {
            result.events.push_back(ChangeEvent{rev, op.path, std::move(now), server_time_ms});
        }
    }
    revision_ = rev;
    return result;
}

std::shared_ptr<const Tree> Store::snapshot() const {
    std::lock_guard lock(read_mutex_);
    return current_;
}

Result<CommitResult, CommitError> Store::commit(std::span<const WriteOp> batch, std::int64_t server_time_ms) {
    std::lock_guard writer(write_mutex_);
    Tree next = *snapshot();
    auto result = next.commit(batch, server_time_ms);
    if (result) {
        auto published = std::make_shared<const Tree>(std::move(next));
        std::lock_guard lock(read_mutex_);
        current_ = std::move(published);
    }
    return result;
}

} // namespace rtsync::datatree
