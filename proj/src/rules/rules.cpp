#include "rtsync/rules/rules.hpp"

#include "rtsync/util/iso_time.hpp"

namespace rtsync::rules {

using datatree::Path;
using datatree::Value;

const char* to_string(DenyReason r) {
    switch (r) {
    case DenyReason::NoMatchingRule: return "NoMatchingRule";
    case DenyReason::AuthRequired: return "AuthRequired";
    case DenyReason::DeviceRequired: return "DeviceRequired";
    case DenyReason::NotPermitted: return "NotPermitted";
    case DenyReason::MustBeBoolean: return "MustBeBoolean";
    case DenyReason::NumberInRange: return "NumberInRange";
    case DenyReason::TextMaxLength: return "TextMaxLength";
    case DenyReason::TimestampNotOlderThanCurrent: return "TimestampNotOlderThanCurrent";
    }
    return "Unknown";
}

std::optional<PathPattern> PathPattern::parse(std::string_view text) {
    if (text.empty() || text.front() != '/') {
        return std::nullopt;
    }
    PathPattern p;
    if (text.size() == 1) {
        return p;
    }
    std::size_t start = 1;
    while (true) {
        const std::size_t slash = text.find('/', start);
        std::string_view piece =
            text.substr(start, slash == std::string_view::npos ? std::string_view::npos : slash - start);
        const bool wildcard = !piece.empty() && piece.front() == '$';
        const std::string_view name = wildcard ? piece.substr(1) : piece;
        if (!Path::valid_segment(name)) {
            return std::nullopt;
        }
        p.segments_.emplace_back(piece);
        if (slash == std::string_view::npos) {
            break;
        }
        start = slash + 1;
    }
    return p;
}

bool PathPattern::matches(const Path& path) const {
    const auto& segs = path.segments();
    if (segs.size() != segments_.size()) {
        return false;
    }
    for (std::size_t i = 0; i < segs.size(); ++i) {
        if (segments_[i].front() != '$' && segments_[i] != segs[i]) {
            return false;
        }
    }
    return true;
}

std::string PathPattern::str() const {
    if (segments_.empty()) {
        return "/";
    }
    std::string out;
    for (const auto& s : segments_) {
        out += '/';
        out += s;
    }
    return out;
}

const RuleEntry* RuleSet::match(const Path& path) const {
    for (const auto& e : entries) {
        if (e.pattern.matches(path)) {
            return &e;
        }
    }
    return nullptr;
}

bool satisfies(AuthRequirement req, const AuthContext& auth) {
    switch (req) {
    case AuthRequirement::Nobody: return false;
    case AuthRequirement::Public: return true;
    case AuthRequirement::Authenticated: return auth.authenticated;
    case AuthRequirement::Device: return auth.is_device();
    }
    return false;
}

namespace {

std::optional<DenyReason> access_failure(AuthRequirement req, const AuthContext& auth) {
    if (satisfies(req, auth)) {
        return std::nullopt;
    }
    if (req == AuthRequirement::Nobody) {
        return DenyReason::NotPermitted;
    }
    if (!auth.authenticated) {
        return DenyReason::AuthRequired;
    }
    return DenyReason::DeviceRequired;
}

} // namespace

std::optional<std::int64_t> timestamp_ms(const Value& v) {
    if (v.is_number()) {
        return static_cast<std::int64_t>(v.as_number());
    }
    if (v.is_text()) {
        return util::parse_iso8601_ms(v.as_text());
    }
    return std::nullopt;
}

std::optional<DenyReason> check_constraint(const ValueConstraint& c, const Value& candidate,
                                           const std::optional<Value>& current) {
    if (std::holds_alternative<MustBeBoolean>(c)) {
        if (!candidate.is_bool()) {
            return DenyReason::MustBeBoolean;
        }
    } else if (const auto* r = std::get_if<NumberInRange>(&c)) {
        if (!candidate.is_number() || candidate.as_number() < r->lo || candidate.as_number() > r->hi) {
            return DenyReason::NumberInRange;
        }
    } else if (const auto* t = std::get_if<TextMaxLength>(&c)) {
        if (!candidate.is_text() || candidate.as_text().size() > t->max) {
            return DenyReason::TextMaxLength;
        }
    } else {
        const auto cand = timestamp_ms(candidate);
        if (!cand) {
            return DenyReason::TimestampNotOlderThanCurrent;
        }
        if (current) {
            const auto cur = timestamp_ms(*current);
            if (cur && *cand < *cur) {
                return DenyReason::TimestampNotOlderThanCurrent;
            }
        }
    }
    return std::nullopt;
}

Decision evaluate_write(const RuleSet& rules, const AuthContext& auth, const Path& path,
                        const std::optional<Value>& candidate, const std::optional<Value>& current,
                        std::int64_t /*now_ms*/) {
    const RuleEntry* entry = rules.match(path);
    if (entry == nullptr) {
        return Decision::deny(DenyReason::NoMatchingRule);
    }
    if (auto why = access_failure(entry->write, auth)) {
        return Decision::deny(*why);
    }
    if (entry->validate && candidate) {
        if (auto why = check_constraint(*entry->validate, *candidate, current)) {
            return Decision::deny(*why);
        }
    }
    return Decision::allow();
}

Decision evaluate_read(const RuleSet& rules, const AuthContext& auth, const Path& path) {
    const RuleEntry* entry = rules.match(path);
    if (entry == nullptr) {
        return Decision::deny(DenyReason::NoMatchingRule);
    }
    if (auto why = access_failure(entry->read, auth)) {
        return Decision::deny(*why);
    }
    return Decision::allow();
}

RuleSet default_ruleset() {
    using A = AuthRequirement;
    auto entry = [](const char* pattern, A read, A write, std::optional<ValueConstraint> v = std::nullopt) {
        return RuleEntry{*PathPattern::parse(pattern), read, write, std::move(v)};
    };
    RuleSet rs;
    rs.entries = {
        entry("/", A::Authenticated, A::Nobody),
        entry("/sensors", A::Authenticated, A::Nobody),
        entry("/sensors/temperature", A::Authenticated, A::Device, NumberInRange{0, 50}),
        entry("/sensors/humidity", A::Authenticated, A::Device, NumberInRange{0, 100}),
        entry("/sensors/distance", A::Authenticated, A::Device, NumberInRange{2, 400}),
        entry("/leds", A::Authenticated, A::Nobody),
        entry("/leds/$led", A::Authenticated, A::Authenticated, MustBeBoolean{}),
        entry("/metadata", A::Authenticated, A::Nobody),
        entry("/metadata/last_update", A::Authenticated, A::Device, TimestampNotOlderThanCurrent{}),
        entry("/metadata/device_id", A::Authenticated, A::Device, TextMaxLength{64}),
        entry("/metadata/status", A::Authenticated, A::Device),
        entry("/metadata/ack", A::Authenticated, A::Nobody),
        entry("/metadata/ack/$target", A::Authenticated, A::Device),
    };
    return rs;
}

} // namespace rtsync::rules
