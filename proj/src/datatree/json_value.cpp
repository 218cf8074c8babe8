#include "rtsync/datatree/json_value.hpp"

#include "rtsync/datatree/path.hpp"

#include <cmath>

namespace rtsync::datatree {

nlohmann::json to_json(const Value& v) {
    if (v.is_bool()) {
        return v.as_bool();
    }
    if (v.is_number()) {
        // Integral values print without a fraction, as in the canonical form.
        const double d = v.as_number();
        constexpr double kExact = 9007199254740992.0; // 2^53
        if (std::trunc(d) == d && std::abs(d) < kExact && !(d == 0 && std::signbit(d))) {
            return static_cast<std::int64_t>(d);
        }
        return d;
    }
    if (v.is_text()) {
        return v.as_text();
    }
    nlohmann::json obj = nlohmann::json::object();
    for (const auto& [k, child] : v.as_branch()) {
        obj[k] = to_json(child);
    }
    return obj;
}

Result<Value, std::string> value_from_json(const nlohmann::json& j) {
    switch (j.type()) {
    case nlohmann::json::value_t::boolean:
        return Value(j.get<bool>());
    case nlohmann::json::value_t::number_integer:
    case nlohmann::json::value_t::number_unsigned:
    case nlohmann::json::value_t::number_float: {
        const double d = j.get<double>();
        if (!std::isfinite(d)) {
            return fail(std::string("non-finite number"));
        }
        return Value(d);
    }
    case nlohmann::json::value_t::string:
        return Value(j.get<std::string>());
    case nlohmann::json::value_t::object: {
        Branch b;
        for (const auto& [k, child] : j.items()) {
            if (!Path::valid_segment(k)) {
                return fail("invalid key '" + k + "'");
            }
            auto v = value_from_json(child);
            if (!v) {
                return fail(v.error());
            }
            if (v->is_branch() && v->as_branch().empty()) {
                continue;
            }
            b.emplace(k, std::move(v).value());
        }
        return Value(std::move(b));
    }
    default:
        return fail(std::string("unsupported JSON type ") + j.type_name());
    }
}

} // namespace rtsync::datatree
