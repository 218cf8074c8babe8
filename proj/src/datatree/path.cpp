#include "rtsync/datatree/path.hpp"

#include <algorithm>

namespace rtsync::datatree {

const char* to_string(PathError e) {
    switch (e) {
    case PathError::NotAbsolute: return "NotAbsolute";
    case PathError::EmptySegment: return "EmptySegment";
    case PathError::ForbiddenCharacter: return "ForbiddenCharacter";
    }
    return "Unknown";
}

bool Path::valid_segment(std::string_view segment) {
    return check_segment(segment).ok();
}

Result<std::string, PathError> Path::check_segment(std::string_view segment) {
    if (segment.empty()) {
        return fail(PathError::EmptySegment);
    }
    for (char c : segment) {
        const auto u = static_cast<unsigned char>(c);
        if (u < 0x20 || u == 0x7f) {
            return fail(PathError::ForbiddenCharacter);
        }
        switch (c) {
        case '/':
        case '.':
        case '#':
        case '$':
        case '[':
        case ']':
            return fail(PathError::ForbiddenCharacter);
        default:
            break;
        }
    }
    return std::string(segment);
}

Result<Path, PathError> Path::parse(std::string_view text) {
    if (text.empty() || text.front() != '/') {
        return fail(PathError::NotAbsolute);
    }
    std::vector<std::string> segments;
    if (text.size() == 1) {
        return Path(std::move(segments));
    }
    std::size_t start = 1;
    while (true) {
        const std::size_t slash = text.find('/', start);
        const std::string_view piece =
            text.substr(start, slash == std::string_view::npos ? std::string_view::npos : slash - start);
        auto checked = check_segment(piece);
        if (!checked) {
            return fail(checked.error());
        }
        segments.push_back(std::move(checked).value());
        if (slash == std::string_view::npos) {
            break;
        }
        start = slash + 1;
    }
    return Path(std::move(segments));
}

Path Path::from_segments(std::vector<std::string> segments) {
    return Path(std::move(segments));
}

Path Path::child(std::string segment) const {
    auto segments = segments_;
    segments.push_back(std::move(segment));
    return Path(std::move(segments));
}

Path Path::parent() const {
    if (segments_.empty()) {
        return *this;
    }
    return Path(std::vector<std::string>(segments_.begin(), segments_.end() - 1));
}

bool Path::contains(const Path& other) const noexcept {
    if (depth() > other.depth()) {
        return false;
    }
    return std::equal(segments_.begin(), segments_.end(), other.segments_.begin());
}

Path Path::common_ancestor(const Path& a, const Path& b) {
    const auto [ia, ib] = std::mismatch(a.segments_.begin(), a.segments_.end(),
                                        b.segments_.begin(), b.segments_.end());
    return Path(std::vector<std::string>(a.segments_.begin(), ia));
}

std::string Path::str() const {
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

} // namespace rtsync::datatree
