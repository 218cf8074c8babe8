#include "rtsync/datatree/snapshot.hpp"

#include <json.hpp>

#include <charconv>
#include <cmath>
#include <set>

namespace rtsync::datatree {

void append_json_string(std::string_view s, std::string& out) {
    static constexpr char hex[] = "0123456789abcdef";
    out += '"';
    for (char c : s) {
        const auto u = static_cast<unsigned char>(c);
        switch (c) {
        case '"': out += "\\\""; break;
        case '\\': out += "\\\\"; break;
        case '\b': out += "\\b"; break;
        case '\f': out += "\\f"; break;
        case '\n': out += "\\n"; break;
        case '\r': out += "\\r"; break;
        case '\t': out += "\\t"; break;
        default:
            if (u < 0x20) {
                out += "\\u00";
                out += hex[u >> 4];
                out += hex[u & 0xf];
            } else {
                out += c;
            }
        }
    }
    out += '"';
}

void append_json_number(double d, std::string& out) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, d);
    out.append(buf, res.ptr);
}

void append_canonical_json(const Value& value, std::string& out) {
    if (value.is_bool()) {
        out += value.as_bool() ? "true" : "false";
    } else if (value.is_number()) {
        append_json_number(value.as_number(), out);
    } else if (value.is_text()) {
        append_json_string(value.as_text(), out);
    } else {
        out += '{';
        bool first = true;
        for (const auto& [k, child] : value.as_branch()) {
            if (!first) {
                out += ',';
            }
            first = false;
            append_json_string(k, out);
            out += ':';
            append_canonical_json(child, out);
        }
        out += '}';
    }
}

std::string canonical_json(const Value& value) {
    std::string out;
    append_canonical_json(value, out);
    return out;
}

std::string serialize_snapshot(const Tree& tree) {
    std::string out;
    append_canonical_json(Value(tree.root()), out);
    return out;
}

namespace {

using json = nlohmann::json;

// Builds a Value directly from parser events so that duplicate keys can be
// detected (the DOM parser silently keeps the last one).
class ValueBuilder : public nlohmann::json_sax<json> {
public:
    bool null() override { return reject("null is not a storable value"); }
    bool boolean(bool val) override { return put(Value(val)); }
    bool number_integer(number_integer_t val) override { return put(Value(static_cast<double>(val))); }
    bool number_unsigned(number_unsigned_t val) override { return put(Value(static_cast<double>(val))); }
    bool number_float(number_float_t val, const string_t&) override {
        if (!std::isfinite(val)) {
            return reject("non-finite number");
        }
        return put(Value(val));
    }
    bool string(string_t& val) override { return put(Value(std::move(val))); }
    bool binary(binary_t&) override { return reject("binary values unsupported"); }
    bool start_object(std::size_t) override {
        frames_.push_back(Frame{});
        return true;
    }
    bool key(string_t& val) override {
        auto& f = frames_.back();
        if (!Path::valid_segment(val)) {
            return reject("invalid key '" + val + "'");
        }
        if (!f.seen.insert(val).second) {
            return reject("duplicate key '" + val + "'");
        }
        f.key = std::move(val);
        return true;
    }
    bool end_object() override {
        Frame f = std::move(frames_.back());
        frames_.pop_back();
        return put(Value(std::move(f.branch)));
    }
    bool start_array(std::size_t) override { return reject("arrays are not storable values"); }
    bool end_array() override { return false; }
    bool parse_error(std::size_t pos, const std::string&, const nlohmann::detail::exception& ex) override {
        return reject("parse error at byte " + std::to_string(pos) + ": " + ex.what());
    }

    std::optional<Value> result;
    std::string error;

private:
    struct Frame {
        Branch branch;
        std::string key;
        std::set<std::string, std::less<>> seen;
    };

    bool put(Value v) {
        if (frames_.empty()) {
            result = std::move(v);
            return true;
        }
        auto& f = frames_.back();
        // Empty objects are pruned on the way in.
        if (v.is_branch() && v.as_branch().empty()) {
            return true;
        }
        f.branch.emplace(std::move(f.key), std::move(v));
        return true;
    }

    bool reject(std::string why) {
        if (error.empty()) {
            error = std::move(why);
        }
        return false;
    }

    std::vector<Frame> frames_;
};

} // namespace

Result<Value, SnapshotFailure> parse_value(std::string_view text) {
    ValueBuilder builder;
    const bool ok = json::sax_parse(text, &builder);
    if (!ok || !builder.result) {
        return fail(SnapshotFailure{SnapshotError::MalformedDocument,
                                    builder.error.empty() ? "malformed document" : builder.error});
    }
    return std::move(*builder.result);
}

Result<Tree, SnapshotFailure> restore_snapshot(std::string_view text) {
    auto parsed = parse_value(text);
    if (!parsed) {
        return fail(parsed.error());
    }
    if (!parsed->is_branch()) {
        return fail(SnapshotFailure{SnapshotError::MalformedDocument, "top level must be an object"});
    }
    return Tree(std::move(parsed->as_branch()), Revision{});
}

} // namespace rtsync::datatree
