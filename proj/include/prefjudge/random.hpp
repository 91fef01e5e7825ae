#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace prefjudge {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// FNV-1a; stable across platforms, used to turn ids into seed material.
inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Child seed as a pure function of a global seed and a path of ids.
inline std::uint64_t derive_seed(std::uint64_t global_seed, std::initializer_list<std::string_view> path) {
    std::uint64_t h = splitmix64(global_seed);
    for (auto part : path) h = splitmix64(h ^ fnv1a64(part));
    return h;
}

inline Rng make_rng(std::uint64_t global_seed, std::initializer_list<std::string_view> path) {
    return Rng(derive_seed(global_seed, path));
}

// Uniform on [0, 1) with 53 bits; unlike std::uniform_real_distribution the
// sequence is identical across standard library implementations.
inline double uniform01(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Uniform integer in [0, n), n > 0, via rejection to avoid modulo bias.
inline std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
        x = rng();
    } while (x >= limit);
    return x % n;
}

inline bool fair_coin(Rng& rng) { return (rng() >> 63) != 0; }

}  // namespace prefjudge
