#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace rtsync::util {

// Parses "YYYY-MM-DDTHH:MM:SS[.fff]Z" (UTC only) into milliseconds since the
// Unix epoch.
std::optional<std::int64_t> parse_iso8601_ms(std::string_view text);

// Formats milliseconds since the epoch as "YYYY-MM-DDTHH:MM:SSZ", adding a
// ".mmm" fraction only when the value is not a whole second.
std::string format_iso8601_ms(std::int64_t epoch_ms);

} // namespace rtsync::util
