#pragma once

// Independent reference models shared by the unit tests and the acceptance
// runner. Nothing here calls into the code under test except to build inputs.

#include "rtsync/datatree/path.hpp"
#include "rtsync/datatree/tree.hpp"
#include "rtsync/datatree/value.hpp"
#include "rtsync/rules/rules.hpp"

#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace rtsync::oracle {

using datatree::Branch;
using datatree::Path;
using datatree::Value;
using datatree::WriteOp;

inline double ulp(double x) {
    return std::nextafter(std::abs(x), std::numeric_limits<double>::infinity()) - std::abs(x);
}

class TempDir {
public:
    TempDir() {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("rtsync_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
    }
    ~TempDir() { std::filesystem::remove_all(path_); }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void spit(const std::filesystem::path& p, const std::string& s) {
    std::ofstream(p, std::ios::binary | std::ios::trunc) << s;
}

// --- document: flat map from full leaf paths to scalars -------------------------------

using Flat = std::map<std::string, Value>;

inline bool under(const std::string& leaf, const std::string& prefix) {
    return prefix == "/" || leaf == prefix || leaf.rfind(prefix + "/", 0) == 0;
}

inline void flatten(const Value& v, const std::string& at, Flat& out) {
    if (!v.is_branch()) {
        out[at] = v;
        return;
    }
    for (const auto& [k, child] : v.as_branch()) {
        flatten(child, at == "/" ? "/" + k : at + "/" + k, out);
    }
}

inline void apply(Flat& flat, const std::string& path, const std::optional<Value>& v) {
    for (auto it = flat.begin(); it != flat.end();) {
        // Writing at p replaces p's subtree; a set also replaces any scalar
        // sitting on one of p's ancestors.
        const bool replaced = under(it->first, path) || (v && under(path, it->first));
        it = replaced ? flat.erase(it) : std::next(it);
    }
    if (v) {
        flatten(*v, path, flat);
    }
}

inline std::optional<Value> get(const Flat& flat, const std::string& path) {
    const auto exact = flat.find(path);
    if (exact != flat.end()) {
        return exact->second;
    }
    Branch root;
    bool any = false;
    for (const auto& [leaf, v] : flat) {
        if (path != "/" && leaf.rfind(path + "/", 0) != 0) {
            continue;
        }
        any = true;
        const auto rest = path == "/" ? leaf.substr(1) : leaf.substr(path.size() + 1);
        Branch* cur = &root;
        std::size_t start = 0;
        while (true) {
            const auto slash = rest.find('/', start);
            const auto key = rest.substr(start, slash - start);
            if (slash == std::string::npos) {
                cur->insert_or_assign(key, v);
                break;
            }
            cur = &(*cur)[key].as_branch();
            start = slash + 1;
        }
    }
    if (!any) {
        return std::nullopt;
    }
    return Value(std::move(root));
}

struct RandomOps {
    std::mt19937_64 rng;
    const std::vector<std::string> keys{"a", "b", "c"};

    std::string path(int max_depth) {
        std::string p;
        const int depth = 1 + static_cast<int>(rng() % max_depth);
        for (int i = 0; i < depth; ++i) {
            p += "/" + keys[rng() % keys.size()];
        }
        return p;
    }
    Value scalar() {
        switch (rng() % 3) {
        case 0: return Value(rng() % 2 == 0);
        case 1: return Value(static_cast<double>(rng() % 100) / 4);
        default: return Value("t" + std::to_string(rng() % 10));
        }
    }
    std::optional<Value> value() {
        const auto r = rng() % 10;
        if (r == 0) {
            return std::nullopt;
        }
        if (r < 3) {
            return Value(Branch{{keys[rng() % 3], scalar()}, {keys[rng() % 3], scalar()}});
        }
        return scalar();
    }
};

// Non-overlapping random batches over a small key space of the seed document.
inline std::vector<WriteOp> random_batch(std::mt19937_64& rng) {
    static const char* paths[] = {"/sensors/temperature", "/sensors/humidity", "/leds/led1", "/leds/led2",
                                  "/metadata/status",     "/x/y/z",            "/x/w",       "/extra"};
    std::vector<WriteOp> batch;
    std::vector<std::string> used;
    const int n = 1 + static_cast<int>(rng() % 3);
    for (int i = 0; i < n; ++i) {
        const std::string p = paths[rng() % std::size(paths)];
        bool overlap = false;
        for (const auto& u : used) {
            overlap |= Path::parse(u)->contains(*Path::parse(p)) || Path::parse(p)->contains(*Path::parse(u));
        }
        if (overlap) {
            continue;
        }
        used.push_back(p);
        switch (rng() % 4) {
        case 0: batch.push_back(WriteOp::remove(*Path::parse(p))); break;
        case 1: batch.push_back(WriteOp::set(*Path::parse(p), Value(rng() % 2 == 0))); break;
        case 2: batch.push_back(WriteOp::set(*Path::parse(p), Value(static_cast<double>(rng() % 1000) / 8))); break;
        default: batch.push_back(WriteOp::set(*Path::parse(p), Value("s\"" + std::to_string(rng() % 10)))); break;
        }
    }
    return batch;
}

// --- write policy of the default ruleset, stated directly ----------------------------

struct Expectation {
    bool allowed;
    rules::DenyReason reason;
};

inline Expectation write_policy(const std::string& path, const Value& v, const rules::AuthContext& who) {
    using rules::DenyReason;
    auto deny = [](DenyReason r) { return Expectation{false, r}; };
    struct Range {
        const char* path;
        double lo, hi;
    };
    static const Range ranges[] = {
        {"/sensors/temperature", 0, 50}, {"/sensors/humidity", 0, 100}, {"/sensors/distance", 2, 400}};
    for (const auto& r : ranges) {
        if (path == r.path) {
            if (!who.authenticated) {
                return deny(DenyReason::AuthRequired);
            }
            if (who.kind != rules::PrincipalKind::Device) {
                return deny(DenyReason::DeviceRequired);
            }
            if (!v.is_number() || v.as_number() < r.lo || v.as_number() > r.hi) {
                return deny(DenyReason::NumberInRange);
            }
            return {true, DenyReason::NoMatchingRule};
        }
    }
    if (path == "/leds/led1" || path == "/leds/led2") {
        if (!who.authenticated) {
            return deny(DenyReason::AuthRequired);
        }
        return v.is_bool() ? Expectation{true, DenyReason::NoMatchingRule} : deny(DenyReason::MustBeBoolean);
    }
    if (path == "/" || path == "/sensors" || path == "/leds") {
        return deny(DenyReason::NotPermitted);
    }
    return deny(DenyReason::NoMatchingRule);
}

struct GridCase {
    std::string path;
    Value value;
    rules::AuthContext who;
};

// 12 paths x 28 values x 3 principals, boundaries of every range included.
inline std::vector<GridCase> write_grid() {
    const std::vector<std::string> paths{"/sensors/temperature", "/sensors/humidity", "/sensors/distance",
                                         "/leds/led1",           "/leds/led2",        "/",
                                         "/sensors",             "/leds",             "/sensors/pressure",
                                         "/leds/led1/blink",     "/config",           "/a/b/c"};
    std::vector<Value> values{Value(true), Value(false), Value("on"), Value(""), Value("23.2")};
    for (double d : {-1.0, -0.001, 0.0, 1.999, 2.0, 2.001, 23.2, 49.999, 50.0, 50.001, 72.2, 99.999, 100.0, 100.001,
                     250.0, 399.999, 400.0, 400.001, 1e6, -1e6, 0.5, 17.68, 1.0}) {
        values.emplace_back(d);
    }
    const std::vector<rules::AuthContext> principals{
        rules::AuthContext::anonymous(),
        rules::AuthContext{true, std::string("dashboard"), rules::PrincipalKind::User},
        rules::AuthContext::device("ESP32_001")};
    std::vector<GridCase> grid;
    for (const auto& p : paths) {
        for (const auto& v : values) {
            for (const auto& who : principals) {
                grid.push_back({p, v, who});
            }
        }
    }
    return grid;
}

} // namespace rtsync::oracle
