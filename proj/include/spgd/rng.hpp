#pragma once

#include <cstdint>
#include <random>

#include "spgd/types.hpp"

namespace spgd {

using Rng = std::mt19937_64;

/// Independent stream for a (seed, purpose) pair. Distinct purposes keep the
/// initial noise, ground truth and measurement noise of one seed uncorrelated.
inline Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return Rng(seq);
}

inline Vector standard_normal(Rng& rng, Eigen::Index dim) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector z(dim);
  for (Eigen::Index i = 0; i < dim; ++i) z[i] = normal(rng);
  return z;
}

namespace streams {
inline constexpr std::uint64_t kInitialNoise = 1;
inline constexpr std::uint64_t kGroundTruth = 2;
inline constexpr std::uint64_t kMeasurementNoise = 3;
inline constexpr std::uint64_t kLipschitzProbes = 4;
}  // namespace streams

}  // namespace spgd
