#include "rtsync/rules/ruleset_file.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>

namespace rtsync::rules {

using ojson = nlohmann::ordered_json;

namespace {

AuthRequirement parse_access(const ojson& j, const std::string& where) {
    if (j.is_null()) {
        return AuthRequirement::Nobody;
    }
    if (!j.is_string()) {
        throw RuleFileError(where + ": access level must be a string");
    }
    const auto s = j.get<std::string>();
    if (s == "none") return AuthRequirement::Nobody;
    if (s == "public") return AuthRequirement::Public;
    if (s == "auth") return AuthRequirement::Authenticated;
    if (s == "device") return AuthRequirement::Device;
    throw RuleFileError(where + ": unknown access level '" + s + "'");
}

const char* access_name(AuthRequirement a) {
    switch (a) {
    case AuthRequirement::Nobody: return "none";
    case AuthRequirement::Public: return "public";
    case AuthRequirement::Authenticated: return "auth";
    case AuthRequirement::Device: return "device";
    }
    return "none";
}

ValueConstraint parse_validate(const ojson& j, const std::string& where) {
    if (j.is_string()) {
        const auto s = j.get<std::string>();
        if (s == "boolean") return MustBeBoolean{};
        if (s == "timestamp_not_older") return TimestampNotOlderThanCurrent{};
        throw RuleFileError(where + ": unknown validator '" + s + "'");
    }
    if (j.is_object() && j.size() == 1) {
        if (j.contains("range")) {
            const auto& r = j["range"];
            if (!r.is_array() || r.size() != 2 || !r[0].is_number() || !r[1].is_number()) {
                throw RuleFileError(where + ": range must be [lo, hi]");
            }
            return NumberInRange{r[0].get<double>(), r[1].get<double>()};
        }
        if (j.contains("max_length")) {
            const auto& m = j["max_length"];
            if (!m.is_number_unsigned()) {
                throw RuleFileError(where + ": max_length must be a non-negative integer");
            }
            return TextMaxLength{m.get<std::size_t>()};
        }
    }
    throw RuleFileError(where + ": malformed validator");
}

ojson render_validate(const ValueConstraint& c) {
    if (std::holds_alternative<MustBeBoolean>(c)) {
        return "boolean";
    }
    if (std::holds_alternative<TimestampNotOlderThanCurrent>(c)) {
        return "timestamp_not_older";
    }
    if (const auto* r = std::get_if<NumberInRange>(&c)) {
        return ojson{{"range", ojson::array({r->lo, r->hi})}};
    }
    return ojson{{"max_length", std::get<TextMaxLength>(c).max}};
}

} // namespace

RuleSet parse_ruleset(std::string_view json_text) {
    ojson doc;
    try {
        doc = ojson::parse(json_text);
    } catch (const ojson::parse_error& e) {
        throw RuleFileError(std::string("ruleset is not valid JSON: ") + e.what());
    }
    if (!doc.is_object()) {
        throw RuleFileError("ruleset must be a JSON object");
    }
    RuleSet rs;
    for (const auto& [pattern_text, body] : doc.items()) {
        auto pattern = PathPattern::parse(pattern_text);
        if (!pattern) {
            throw RuleFileError("invalid pattern '" + pattern_text + "'");
        }
        if (!body.is_object()) {
            throw RuleFileError(pattern_text + ": rule body must be an object");
        }
        for (const auto& [k, _] : body.items()) {
            if (k != "read" && k != "write" && k != "validate") {
                throw RuleFileError(pattern_text + ": unknown field '" + k + "'");
            }
        }
        RuleEntry e{*pattern, parse_access(body.value("read", ojson()), pattern_text),
                    parse_access(body.value("write", ojson()), pattern_text), std::nullopt};
        if (body.contains("validate")) {
            e.validate = parse_validate(body["validate"], pattern_text);
        }
        rs.entries.push_back(std::move(e));
    }
    return rs;
}

std::string render_ruleset(const RuleSet& rules) {
    ojson doc = ojson::object();
    for (const auto& e : rules.entries) {
        ojson body = ojson::object();
        body["read"] = access_name(e.read);
        body["write"] = access_name(e.write);
        if (e.validate) {
            body["validate"] = render_validate(*e.validate);
        }
        doc[e.pattern.str()] = std::move(body);
    }
    return doc.dump(2) + "\n";
}

RuleSet load_ruleset(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) {
        throw RuleFileError("cannot open ruleset file " + file.string());
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_ruleset(ss.str());
}

} // namespace rtsync::rules
