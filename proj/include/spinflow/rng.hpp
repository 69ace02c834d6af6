#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

#include "spinflow/errors.hpp"

namespace spinflow {

// FNV-1a 64-bit hash. Used for deriving per-module RNG streams from a single
// manifest seed and for artifact checksums.
constexpr std::uint64_t fnv1a64(std::string_view data) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : data) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

// Per-module stream derivation from one manifest seed.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream) {
    return seed ^ fnv1a64(stream);
}

// SplitMix64 step. Stateless apart from the counter it advances.
inline std::uint64_t splitmix64_next(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

// xoshiro256** seeded through SplitMix64, with explicit uniform/normal
// transforms. std::<random> distributions are implementation-defined, which
// would break the bit-reproducibility contract of the sampling operations;
// every stochastic op in this library draws from this generator only.
class Rng {
public:
    explicit Rng(std::uint64_t seed) {
        std::uint64_t sm = seed;
        for (auto& word : state_) word = splitmix64_next(sm);
    }

    // Documented per-module stream derivation: seed XOR fnv1a64(stream).
    static Rng for_stream(std::uint64_t seed, std::string_view stream) {
        return Rng(derive_seed(seed, stream));
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform on [0, 1) with 53 random bits.
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Strict comparison so that p = 0 never fires and p = 1 always does.
    bool bernoulli(double p) { return uniform01() < p; }

    // Uniform integer in [0, n). Multiply-shift; bias is < n / 2^64.
    std::uint64_t below(std::uint64_t n) {
        if (n == 0) throw InvalidArgumentError("Rng::below: n must be positive");
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    int spin() { return (next_u64() >> 63) ? 1 : -1; }

    // Standard normal via Box-Muller. Two uniforms per draw, no cached
    // second value, so the stream position is a pure function of call count.
    double normal() {
        const double u1 = 1.0 - uniform01();  // (0, 1], keeps log finite
        const double u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    std::uint64_t state_[4];
};

}  // namespace spinflow
