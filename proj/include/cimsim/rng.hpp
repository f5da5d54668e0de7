#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace cimsim {

// Deterministic stream derivation. Every random draw in the simulator comes
// from a generator seeded by a key hierarchy (global seed, layer, tile row,
// tile col, purpose tag, optional sample index), so results are bit-identical
// regardless of execution order or thread count.

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t mix_seed(std::initializer_list<std::uint64_t> parts) {
    std::uint64_t h = 0x6a09e667f3bcc908ULL;
    for (std::uint64_t p : parts) h = splitmix64(h ^ splitmix64(p));
    return h;
}

// Purpose tags for sub-stream derivation.
namespace rng_tag {
constexpr std::uint64_t program = 1;   // D2D draw + SAF mask + drift signs
constexpr std::uint64_t output = 2;    // circuit-mode MAC output noise
constexpr std::uint64_t dataset = 3;   // fixture data generation
constexpr std::uint64_t sweep = 4;     // per-point sweep seeds
constexpr std::uint64_t sample = 5;    // per-sample sub-seed for spatial layers
}  // namespace rng_tag

inline std::mt19937_64 make_stream(std::initializer_list<std::uint64_t> parts) {
    return std::mt19937_64(mix_seed(parts));
}

}  // namespace cimsim
