#pragma once

#include "rtsync/result.hpp"

#include <compare>
#include <string>
#include <string_view>
#include <vector>

namespace rtsync::datatree {

enum class PathError {
    NotAbsolute,        // text does not start with '/'
    EmptySegment,
    ForbiddenCharacter,
};

const char* to_string(PathError e);

// Absolute, slash-separated location in the tree. The empty segment list is
// the root ("/").
class Path {
public:
    Path() = default;

    static Result<Path, PathError> parse(std::string_view text);

    // Builds a path from segments that are already known to be valid.
    static Path from_segments(std::vector<std::string> segments);

    // A key is valid when non-empty and free of '/', '.', '#', '$', '[', ']'
    // and ASCII control characters.
    static bool valid_segment(std::string_view segment);
    static Result<std::string, PathError> check_segment(std::string_view segment);

    const std::vector<std::string>& segments() const noexcept { return segments_; }
    std::size_t depth() const noexcept { return segments_.size(); }
    bool is_root() const noexcept { return segments_.empty(); }
    const std::string& leaf() const { return segments_.back(); }

    Path child(std::string segment) const;
    Path parent() const;

    // True when *this is a (non-strict) prefix of other.
    bool contains(const Path& other) const noexcept;
    bool strictly_contains(const Path& other) const noexcept {
        return depth() < other.depth() && contains(other);
    }

    // Longest common prefix.
    static Path common_ancestor(const Path& a, const Path& b);

    std::string str() const;

    friend bool operator==(const Path&, const Path&) = default;
    friend std::strong_ordering operator<=>(const Path& a, const Path& b) {
        return a.segments_ <=> b.segments_;
    }

private:
    explicit Path(std::vector<std::string> segments) : segments_(std::move(segments)) {}

    std::vector<std::string> segments_;
};

} // namespace rtsync::datatree
