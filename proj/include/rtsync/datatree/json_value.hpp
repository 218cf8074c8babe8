#pragma once

#include "rtsync/datatree/value.hpp"
#include "rtsync/result.hpp"

#include <json.hpp>

#include <string>

namespace rtsync::datatree {

nlohmann::json to_json(const Value& v);

// Converts a JSON DOM value. Rejects null, arrays, non-finite numbers and
// invalid keys; prunes empty objects (an all-empty object yields an empty Branch).
Result<Value, std::string> value_from_json(const nlohmann::json& j);

} // namespace rtsync::datatree
