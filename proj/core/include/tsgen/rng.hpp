#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace tsgen {

/// Mixes a 64-bit value (splitmix64 finalizer). Used to spread user seeds
/// and to derive independent sub-stream seeds.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Derives the seed of sub-stream `stream` from a base seed. Distinct
/// streams (data prep, init, per-sample masks, ...) never share draws.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    return mix64(mix64(seed) ^ mix64(stream * 0x2545f4914f6cdd1dULL + 1));
}

/// Deterministic PRNG (xoshiro256++). Self-contained so that results are
/// identical across platforms and standard library versions.
class Rng {
public:
    explicit Rng(std::uint64_t seed) {
        std::uint64_t x = seed;
        for (auto& word : state_) {
            x = mix64(x);
            word = x ? x : 0x6a09e667f3bcc909ULL;
        }
    }

    std::uint64_t next_u64() {
        auto rotl = [](std::uint64_t v, int k) { return (v << k) | (v >> (64 - k)); };
        const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    /// Uniform in [0, 1) with 53 bits of precision.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller. No spare caching: exactly two
    /// uniform draws are consumed per call, which keeps draw positions
    /// independent of call history.
    double normal() {
        double u1;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        const double u2 = uniform();
        const double two_pi = 6.283185307179586476925286766559;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
    }

    /// Unbiased integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t bound = n == 0 ? 0 : (0ULL - n) % n;
        std::uint64_t r;
        do {
            r = next_u64();
        } while (r < bound);
        return r % n;
    }

private:
    std::array<std::uint64_t, 4> state_{};
};

}  // namespace tsgen
