#pragma once

#include <cstdint>
#include <random>

#include "caol/signal.hpp"

namespace caol {

using Rng = std::mt19937_64;

/// Independent generator for (master seed, stream index). Serial and parallel
/// trial loops draw from the same per-trial streams and therefore agree.
inline Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream),
                    static_cast<std::uint32_t>(stream >> 32), 0x6361u};
  return Rng(seq);
}

inline Matrix gaussian_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Matrix m(rows, cols);
  // column-major fill keeps draws reproducible regardless of Eigen internals
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = normal(rng);
  return m;
}

}  // namespace caol
