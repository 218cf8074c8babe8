#pragma once

#include "rtsync/datatree/tree.hpp"
#include "rtsync/result.hpp"

#include <string>
#include <string_view>

namespace rtsync::datatree {

// Canonical document text: UTF-8 JSON, keys sorted, numbers in shortest
// round-trip form, no insignificant whitespace. The empty tree is "{}".
std::string serialize_snapshot(const Tree& tree);
std::string canonical_json(const Value& value);
void append_canonical_json(const Value& value, std::string& out);
void append_json_string(std::string_view s, std::string& out);
void append_json_number(double d, std::string& out);

enum class SnapshotError {
    MalformedDocument,
};

struct SnapshotFailure {
    SnapshotError code = SnapshotError::MalformedDocument;
    std::string detail;
};

// Parses a document. Rejects duplicate keys, arrays, nulls, invalid keys and
// a non-object top level. Empty nested objects are pruned. The returned tree
// carries revision 0.
Result<Tree, SnapshotFailure> restore_snapshot(std::string_view text);

// Same parser for a single value (scalar or object).
Result<Value, SnapshotFailure> parse_value(std::string_view text);

} // namespace rtsync::datatree
