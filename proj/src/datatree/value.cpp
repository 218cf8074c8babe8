#include "rtsync/datatree/value.hpp"

#include "rtsync/datatree/path.hpp"

#include <cmath>

namespace rtsync::datatree {

const Value* Value::find(std::string_view key) const {
    if (!is_branch()) {
        return nullptr;
    }
    const auto& b = as_branch();
    const auto it = b.find(key);
    return it == b.end() ? nullptr : &it->second;
}

bool Value::all_finite() const {
    if (is_number()) {
        return std::isfinite(as_number());
    }
    if (is_branch()) {
        for (const auto& [k, child] : as_branch()) {
            if (!child.all_finite()) {
                return false;
            }
        }
    }
    return true;
}

bool Value::keys_valid() const {
    if (!is_branch()) {
        return true;
    }
    for (const auto& [k, child] : as_branch()) {
        if (!Path::valid_segment(k) || !child.keys_valid()) {
            return false;
        }
    }
    return true;
}

std::size_t Value::leaf_count() const {
    if (!is_branch()) {
        return 1;
    }
    std::size_t n = 0;
    for (const auto& [k, child] : as_branch()) {
        n += child.leaf_count();
    }
    return n;
}

std::optional<Value> pruned(Value v) {
    if (!v.is_branch()) {
        return v;
    }
    Branch out;
    for (auto& [k, child] : v.as_branch()) {
        if (auto p = pruned(std::move(child))) {
            out.emplace(k, std::move(*p));
        }
    }
    if (out.empty()) {
        return std::nullopt;
    }
    return Value(std::move(out));
}

const char* kind_name(const Value& v) {
    if (v.is_bool()) return "boolean";
    if (v.is_number()) return "number";
    if (v.is_text()) return "text";
    return "branch";
}

} // namespace rtsync::datatree
