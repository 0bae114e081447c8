// Seed derivation and RNG plumbing.
//
// Every random choice in the pipeline draws from an engine seeded through
// derive_seed(root, stage_name, index). Adding a stage never perturbs the
// stream of another stage.
#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace nrmt {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Named, indexed seed stream: deterministic in (root, name, index).
inline std::uint64_t derive_seed(std::uint64_t root, std::string_view name, std::uint64_t index = 0) {
    std::uint64_t s = splitmix64(root ^ fnv1a64(name));
    return splitmix64(s + index);
}

inline std::mt19937_64 make_engine(std::uint64_t seed) {
    return std::mt19937_64(seed);
}

}  // namespace nrmt
