#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace dimel::nk {

/// SplitMix64 finalizer; a bijective 64-bit mixer.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Counter-based generator: the n-th draw is a pure function of
/// (key, n), so any stream can be reproduced or resumed from its key alone.
/// Unlike the <random> distributions, the output is identical on every
/// standard library.
class CounterRng {
public:
    explicit CounterRng(std::uint64_t key) noexcept : key_(mix64(key)) {}
    CounterRng(std::uint64_t seed, std::uint64_t stream) noexcept
        : key_(mix64(mix64(seed) ^ (stream * 0xd1b54a32d192ed03ULL + 1))) {}

    std::uint64_t next_u64() noexcept { return mix64(key_ + counter_++ * 0x9e3779b97f4a7c15ULL); }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, bound) via rejection; bound must be > 0.
    std::uint64_t below(std::uint64_t bound) noexcept {
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
        std::uint64_t x;
        do { x = next_u64(); } while (x >= limit);
        return x % bound;
    }

    /// Standard normal via Box-Muller (one value per call, no caching).
    double normal() noexcept {
        const double u1 = 1.0 - uniform();  // (0, 1]
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    std::uint64_t counter() const noexcept { return counter_; }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

} // namespace dimel::nk
