#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace fedema {

using Rng = std::mt19937_64;

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

inline constexpr std::uint64_t hash_tag(std::string_view tag) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (char c : tag) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001B3ULL;
    }
    return h;
}

/// Derives an independent generator from (master seed, purpose, client, round).
/// Streams never depend on how many other streams were drawn before them.
inline Rng substream(std::uint64_t seed, std::string_view purpose, std::uint64_t client = 0,
                     std::uint64_t round = 0) {
    std::uint64_t h = splitmix64(seed);
    h = splitmix64(h ^ hash_tag(purpose));
    h = splitmix64(h ^ (client + 0x51ED27ULL));
    h = splitmix64(h ^ (round + 0xA24BAEDULL));
    return Rng(h);
}

}  // namespace fedema
