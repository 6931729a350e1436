#pragma once

#include <cstdint>
#include <random>

#include "drig/linalg.hpp"

namespace drig {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer over (base, stream): independent, reproducible seeds
/// for parallel replications and per-environment draws.
constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
    std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

inline Matrix standard_normal(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix out(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j) {
        for (Eigen::Index i = 0; i < rows; ++i) out(i, j) = normal(rng);
    }
    return out;
}

inline Matrix uniform01(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    Matrix out(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j) {
        for (Eigen::Index i = 0; i < rows; ++i) out(i, j) = unif(rng);
    }
    return out;
}

}  // namespace drig
