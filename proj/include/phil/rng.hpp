#pragma once

#include <cstdint>

namespace phil {

/// Deterministic 64-bit generator (splitmix64). The state advances by the
/// additive constant 0x9E3779B97F4A7C15 and each output is finalized with the
/// multipliers 0xBF58476D1CE4E5B9 and 0x94D049BB133111EB (shifts 30/27/31).
/// Same seed, same platform-independent sequence; used everywhere a seeded
/// draw is needed so runs replay bit-exactly.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        state_ += 0x9E3779B97F4A7C15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    /// Uniform double in [0, 1), 53 significant bits.
    double next_unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    /// Uniform double in [lo, hi).
    double next_in(double lo, double hi) { return lo + (hi - lo) * next_unit(); }

private:
    std::uint64_t state_;
};

}  // namespace phil
