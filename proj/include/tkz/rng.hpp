#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "tkz/errors.hpp"

namespace tkz {

/// Deterministic stream of pseudo-random draws. The full algorithm is pinned
/// so that any reimplementation of this library reproduces the exact draw
/// sequences; test vectors live in the unit tests.
///
/// Engine: SplitMix64 (Steele, Lea & Flood). One 64-bit state word;
///   next_u64: state += 0x9E3779B97F4A7C15;
///             z = state; z ^= z >> 30; z *= 0xBF58476D1CE4E5B9;
///             z ^= z >> 27; z *= 0x94D049BB133111EB; z ^= z >> 31; return z.
/// Streams: SamplerState(seed, stream) starts from
///   state = seed + stream * 0x9E3779B97F4A7C15 (wrapping). Solvers draw row
///   blocks from stream 0, inner blocks from stream 1, column indices from
///   stream 2; generators use streams 16+attempt.
///
/// Derived draws (all consume next_u64 as described, nothing else):
///   uniform_below(n): rejection sampling. q = floor((2^64 - 1) / n); draw r
///     until r < n * q; return r % n.
///   uniform01(): (next_u64() >> 11) * 2^-53, in [0, 1).
///   normal(): Box-Muller pair. u1 = ((next_u64() >> 11) + 1) * 2^-53 in
///     (0, 1]; u2 = uniform01(); r = sqrt(-2 ln u1); return r * cos(2 pi u2)
///     now and r * sin(2 pi u2) on the following call.
///   uniform_subset(m, k): partial Fisher-Yates over [0..m-1]; for j in
///     [0, k): swap position j with j + uniform_below(m - j); the first k
///     entries, sorted ascending, form the subset.
class SamplerState {
public:
    explicit SamplerState(std::uint64_t seed, std::uint64_t stream = 0)
        : state_(seed + stream * 0x9E3779B97F4A7C15ULL) {}

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        ++draws_;
        return z ^ (z >> 31);
    }

    std::uint64_t uniform_below(std::uint64_t n) {
        if (n == 0) throw ConfigError("uniform_below(0)");
        const std::uint64_t q = ~0ULL / n;
        const std::uint64_t bound = n * q;
        std::uint64_t r;
        do {
            r = next_u64();
        } while (r >= bound);
        return r % n;
    }

    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double normal();

    /// Uniform k-subset of {0, ..., m-1}, sorted ascending.
    std::vector<std::int64_t> uniform_subset(std::int64_t m, std::int64_t k);

    /// In-place Fisher-Yates shuffle (used by partition construction).
    void shuffle(std::vector<std::int64_t>& v);

    std::uint64_t draws() const { return draws_; }

private:
    std::uint64_t state_;
    std::uint64_t draws_ = 0;
    std::optional<double> cached_normal_;
};

} // namespace tkz
