#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace rtsync::sim {

inline std::uint64_t splitmix64(std::uint64_t& state) noexcept {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// Seeded generator with portable derived quantities (the standard
// distributions are implementation-defined, so they are done by hand here).
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    // Independent stream `id` of a master seed.
    static Rng stream(std::uint64_t seed, std::uint64_t id) {
        std::uint64_t s = seed ^ (id * 0xD1B54A32D192ED03ULL);
        splitmix64(s);
        return Rng(splitmix64(s));
    }

    std::uint64_t next() { return engine_(); }

    // [0, 1) with 53 random bits.
    double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    // Inclusive range.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        const auto span = static_cast<unsigned __int128>(static_cast<std::uint64_t>(hi - lo) + 1);
        return lo + static_cast<std::int64_t>((static_cast<unsigned __int128>(next()) * span) >> 64);
    }

    bool bernoulli(double p) {
        if (p <= 0) {
            return false;
        }
        if (p >= 1) {
            return true;
        }
        return uniform01() < p;
    }

    // Standard normal via Box-Muller (one value per call, no caching).
    double normal() {
        const double u1 = 1.0 - uniform01(); // (0, 1]
        const double u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

private:
    std::mt19937_64 engine_;
};

} // namespace rtsync::sim
