#pragma once

#include <cstdint>
#include <random>

namespace sfc {

using Rng = std::mt19937_64;

// Derives an independent stream seed from a master seed. SplitMix64 finalizer.
inline std::uint64_t split_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Normal draw rejected and redrawn until strictly positive.
inline double truncated_normal_positive(Rng& rng, double mean, double stddev) {
    std::normal_distribution<double> dist(mean, stddev);
    double x = dist(rng);
    while (!(x > 0.0)) x = dist(rng);
    return x;
}

}  // namespace sfc
