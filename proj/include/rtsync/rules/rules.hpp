#pragma once

#include "rtsync/datatree/path.hpp"
#include "rtsync/datatree/value.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace rtsync::rules {

enum class PrincipalKind { Device, User };

// Who is talking to the server. Unauthenticated contexts carry no principal.
struct AuthContext {
    bool authenticated = false;
    std::optional<std::string> principal;
    PrincipalKind kind = PrincipalKind::User;

    static AuthContext anonymous() { return {}; }
    static AuthContext device(std::string id) { return {true, std::move(id), PrincipalKind::Device}; }
    static AuthContext user(std::string id) { return {true, std::move(id), PrincipalKind::User}; }

    bool is_device() const noexcept { return authenticated && kind == PrincipalKind::Device; }
    friend bool operator==(const AuthContext&, const AuthContext&) = default;
};

enum class AuthRequirement {
    Nobody,        // never allowed
    Public,        // anyone, including unauthenticated sessions
    Authenticated, // any authenticated principal
    Device,        // authenticated device principal
};

struct MustBeBoolean {
    friend bool operator==(const MustBeBoolean&, const MustBeBoolean&) = default;
};
struct NumberInRange {
    double lo = 0;
    double hi = 0; // inclusive
    friend bool operator==(const NumberInRange&, const NumberInRange&) = default;
};
struct TextMaxLength {
    std::size_t max = 0;
    friend bool operator==(const TextMaxLength&, const TextMaxLength&) = default;
};
// Candidate timestamp (ISO-8601 text or epoch-ms number) must not be older
// than the currently stored one.
struct TimestampNotOlderThanCurrent {
    friend bool operator==(const TimestampNotOlderThanCurrent&, const TimestampNotOlderThanCurrent&) = default;
};

using ValueConstraint = std::variant<MustBeBoolean, NumberInRange, TextMaxLength, TimestampNotOlderThanCurrent>;

// Pattern segments beginning with '$' match exactly one arbitrary segment.
class PathPattern {
public:
    static std::optional<PathPattern> parse(std::string_view text);

    bool matches(const datatree::Path& path) const;
    const std::vector<std::string>& segments() const noexcept { return segments_; }
    std::string str() const;

    friend bool operator==(const PathPattern&, const PathPattern&) = default;

private:
    std::vector<std::string> segments_;
};

struct RuleEntry {
    PathPattern pattern;
    AuthRequirement read = AuthRequirement::Nobody;
    AuthRequirement write = AuthRequirement::Nobody;
    std::optional<ValueConstraint> validate;

    friend bool operator==(const RuleEntry&, const RuleEntry&) = default;
};

// Ordered list; the first entry whose pattern matches decides. No match denies.
struct RuleSet {
    std::vector<RuleEntry> entries;

    const RuleEntry* match(const datatree::Path& path) const;
    friend bool operator==(const RuleSet&, const RuleSet&) = default;
};

enum class DenyReason {
    NoMatchingRule,
    AuthRequired,
    DeviceRequired,
    NotPermitted,
    MustBeBoolean,
    NumberInRange,
    TextMaxLength,
    TimestampNotOlderThanCurrent,
};

const char* to_string(DenyReason r);

struct Decision {
    bool allowed = false;
    DenyReason reason = DenyReason::NoMatchingRule; // meaningful only when denied

    static Decision allow() { return {true, DenyReason::NoMatchingRule}; }
    static Decision deny(DenyReason r) { return {false, r}; }
    explicit operator bool() const noexcept { return allowed; }
    friend bool operator==(const Decision& a, const Decision& b) {
        return a.allowed == b.allowed && (a.allowed || a.reason == b.reason);
    }
};

// `candidate` is nullopt for deletions, which skip value constraints.
// `now_ms` is accepted for interface stability; no shipped constraint reads it.
Decision evaluate_write(const RuleSet& rules, const AuthContext& auth, const datatree::Path& path,
                        const std::optional<datatree::Value>& candidate,
                        const std::optional<datatree::Value>& current, std::int64_t now_ms);

Decision evaluate_read(const RuleSet& rules, const AuthContext& auth, const datatree::Path& path);

bool satisfies(AuthRequirement req, const AuthContext& auth);
std::optional<DenyReason> check_constraint(const ValueConstraint& c, const datatree::Value& candidate,
                                           const std::optional<datatree::Value>& current);

// Reads a timestamp stored as ISO-8601 text or as an epoch-ms number.
std::optional<std::int64_t> timestamp_ms(const datatree::Value& v);

RuleSet default_ruleset();

} // namespace rtsync::rules
