#pragma once

#include <cstdint>

namespace gcam {

/// SplitMix64 step; used to expand a user seed into xorshift state and to
/// derive per-item seeds.
constexpr std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

constexpr std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t s = seed ^ (salt * 0xD1B54A32D192ED03ULL);
    return splitmix64(s);
}

/// xorshift64* (Marsaglia shifts 12/25/27, multiplier 0x2545F4914F6CDD1D).
/// State is seeded through one SplitMix64 step so that seed 0 is valid.
/// This is the only generator used for weights, shuffles, datasets and
/// sticker placement; the algorithm is part of the file-format contract.
class Xorshift64Star {
public:
    explicit constexpr Xorshift64Star(std::uint64_t seed) {
        std::uint64_t s = seed;
        state_ = splitmix64(s);
        if (state_ == 0) state_ = 0x9E3779B97F4A7C15ULL;
    }

    constexpr std::uint64_t next() {
        state_ ^= state_ >> 12;
        state_ ^= state_ << 25;
        state_ ^= state_ >> 27;
        return state_ * 0x2545F4914F6CDD1DULL;
    }

    /// Uniform in [0, 1) with 53 random bits.
    constexpr double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    constexpr double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). Plain modulo; n is always tiny here.
    constexpr std::uint64_t below(std::uint64_t n) { return next() % n; }

private:
    std::uint64_t state_ = 0;
};

}  // namespace gcam
