#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace icdn {

using Rng = std::mt19937_64;

// Independent named sub-stream of a run seed ("data", "init", "dropout",
// "bootstrap", ...). Streams with different names never share state.
inline Rng make_stream(std::uint64_t seed, std::string_view name) {
    std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
    for (unsigned char c : name) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (h | 1ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;  // splitmix64 finalizer
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    z ^= z >> 31;
    return Rng(z);
}

// Uniform on [0, 1) with 53 random bits; identical on every platform.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

}  // namespace icdn
