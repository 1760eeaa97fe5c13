#pragma once

#include <cstdint>
#include <string_view>

namespace hydroseq {

/// 64-bit FNV-1a.
constexpr std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ULL) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/**
 * Sub-seed for a named consumer of randomness.
 *
 * Every stream in the program is `derive_seed(run_seed, label, index)`, so a single
 * user-facing seed determines everything and distinct consumers never share a stream.
 */
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::string_view label, std::uint64_t index = 0) {
    return splitmix64(splitmix64(seed ^ fnv1a(label)) + index);
}

}  // namespace hydroseq
