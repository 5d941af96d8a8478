#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace ntkw {

// All randomness in the library flows from one global seed through named
// sub-streams ("init", "sgd", "flips", ...) so each component can be
// reproduced independently of the others.
inline std::uint64_t mix_seed(std::uint64_t seed, std::string_view stream) {
    // FNV-1a over the stream name, then a splitmix64 finalizer.
    std::uint64_t h = 1469598103934665603ULL;
    for (char c : stream) {
        h ^= static_cast<std::uint8_t>(c);
        h *= 1099511628211ULL;
    }
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL + h;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::mt19937_64 make_rng(std::uint64_t seed, std::string_view stream = "") {
    return std::mt19937_64(stream.empty() ? seed : mix_seed(seed, stream));
}

}  // namespace ntkw
