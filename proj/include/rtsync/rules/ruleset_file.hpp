#pragma once

#include "rtsync/rules/rules.hpp"

#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>

namespace rtsync::rules {

struct RuleFileError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// JSON object mapping pattern strings to {"read", "write", "validate"}.
// Object member order is the evaluation order. Access levels: "none",
// "public", "auth", "device" (missing means "none"). Validators: "boolean",
// "timestamp_not_older", {"range": [lo, hi]}, {"max_length": n}.
RuleSet parse_ruleset(std::string_view json_text);
std::string render_ruleset(const RuleSet& rules);
RuleSet load_ruleset(const std::filesystem::path& file);

} // namespace rtsync::rules
