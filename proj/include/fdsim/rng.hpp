#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace fdsim::rng {

// splitmix64 finalizer; used to derive independent stream seeds.
inline std::uint64_t mix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
    return mix(a ^ mix(b));
}

// Deterministic per-purpose stream: the same (master, path) always yields the
// same engine, and distinct paths yield unrelated streams. Device/round work
// each gets its own stream so execution order and worker count cannot change
// the numbers drawn.
inline std::mt19937_64 make_stream(std::uint64_t master, std::initializer_list<std::uint64_t> path) {
    std::uint64_t s = mix(master);
    for (std::uint64_t p : path) s = mix(s, p);
    return std::mt19937_64(s);
}

// Hand-rolled draws: std::*_distribution output is implementation-defined, so
// results would not be stable across standard libraries.
inline double uniform(std::mt19937_64& g) {
    return static_cast<double>(g() >> 11) * 0x1.0p-53; // [0, 1)
}

inline double uniform(std::mt19937_64& g, double lo, double hi) {
    return lo + (hi - lo) * uniform(g);
}

// Uniform integer in [0, n). n must be > 0.
inline std::uint64_t uniform_index(std::mt19937_64& g, std::uint64_t n) {
    // Multiply-shift; bias is < 2^-64 * n, irrelevant at simulation scale.
    return static_cast<std::uint64_t>((static_cast<unsigned __int128>(g()) * n) >> 64);
}

// Box-Muller. Consumes exactly two draws per call.
inline double normal(std::mt19937_64& g) {
    double u1 = 0.0;
    while (u1 <= 0.0) u1 = uniform(g);
    double u2 = uniform(g);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

} // namespace fdsim::rng
