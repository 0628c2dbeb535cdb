#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace bsum {

/// Deterministic random stream built on SplitMix64.
///
/// SplitMix64 is counter based: the k-th output is a fixed bijective mix of
/// `state0 + k * 0x9E3779B97F4A7C15`, where `state0` is the mixed seed. The
/// sequence for a given seed is therefore identical on every platform and
/// compiler. Uniform and normal variates are derived here rather than through
/// `<random>` distributions, whose output is implementation defined.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed) : seed_(seed), state_(mix(seed)) {}

    /// Stream for Monte-Carlo replicate `index` of an experiment seeded with `seed`.
    static RngStream replicate(std::uint64_t seed, std::uint64_t index) {
        return RngStream(seed + index);
    }

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64() {
        state_ += kGamma;
        return mix(state_);
    }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller; consumes two uniforms per pair.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * std::numbers::pi * u2;
        spare_ = radius * std::sin(angle);
        has_spare_ = true;
        return radius * std::cos(angle);
    }

private:
    static constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;

    static std::uint64_t mix(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    std::uint64_t seed_;
    std::uint64_t state_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace bsum
