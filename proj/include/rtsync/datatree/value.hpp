#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>

namespace rtsync::datatree {

class Value;

// Children keyed by segment, always iterated in lexicographic key order.
using Branch = std::map<std::string, Value, std::less<>>;

// Tree payload: Boolean, Number (IEEE double), Text or Branch.
class Value {
public:
    using Storage = std::variant<bool, double, std::string, Branch>;

    Value() : data_(Branch{}) {}
    Value(bool b) : data_(b) {}
    Value(double d) : data_(d) {}
    Value(int i) : data_(static_cast<double>(i)) {}
    Value(const char* s) : data_(std::string(s)) {}
    Value(std::string s) : data_(std::move(s)) {}
    Value(std::string_view s) : data_(std::string(s)) {}
    Value(Branch b) : data_(std::move(b)) {}

    bool is_bool() const noexcept { return std::holds_alternative<bool>(data_); }
    bool is_number() const noexcept { return std::holds_alternative<double>(data_); }
    bool is_text() const noexcept { return std::holds_alternative<std::string>(data_); }
    bool is_branch() const noexcept { return std::holds_alternative<Branch>(data_); }

    bool as_bool() const { return std::get<bool>(data_); }
    double as_number() const { return std::get<double>(data_); }
    const std::string& as_text() const { return std::get<std::string>(data_); }
    const Branch& as_branch() const { return std::get<Branch>(data_); }
    Branch& as_branch() { return std::get<Branch>(data_); }

    const Storage& storage() const noexcept { return data_; }

    // Child lookup on a Branch; nullptr for scalars or missing keys.
    const Value* find(std::string_view key) const;

    // True if every number in the value is finite.
    bool all_finite() const;
    // True if every key (recursively) is a valid path segment.
    bool keys_valid() const;
    // Number of scalar leaves.
    std::size_t leaf_count() const;

    friend bool operator==(const Value& a, const Value& b) { return a.data_ == b.data_; }

private:
    Storage data_;
};

// Removes empty branches recursively. Returns nullopt when nothing is left.
std::optional<Value> pruned(Value v);

const char* kind_name(const Value& v);

} // namespace rtsync::datatree
