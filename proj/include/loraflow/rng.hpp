// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "loraflow/matrix.hpp"

namespace loraflow {

namespace detail {

inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace detail

/// Counter-based generator: the stream is a pure function of
/// (seed, call index), so identical seeds give bit-identical streams on
/// any platform. Single-owner; parallel workloads must derive child
/// seeds with derive_seed instead of sharing one state.
class RngState {
 public:
  explicit RngState(std::uint64_t seed) : seed_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }

  std::uint64_t next_u64() {
    ++counter_;
    return detail::mix64(seed_ + counter_ * 0x9E3779B97F4A7C15ull);
  }

  /// Uniform in (0, 1]; never returns 0, safe under log().
  double next_uniform_pos() {
    return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
  }

  /// Uniform in [0, 1).
  double next_uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller; pairs are cached, so draws remain a
  /// pure function of (seed, call sequence).
  double next_gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = next_uniform_pos();
    const double u2 = next_uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * 3.14159265358979323846 * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

 private:
  std::uint64_t seed_ = 0;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Deterministic child seed for an indexed stream (one per trial).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return detail::mix64(seed ^ detail::mix64((stream + 1) * 0xD1B54A32D192ED03ull));
}

/// rows x cols matrix with i.i.d. N(0, sigma^2) entries in row-major draw order.
inline Matrix gaussian_matrix(RngState& rng, std::size_t rows, std::size_t cols,
                              double sigma) {
  if (!(sigma > 0.0)) {
    throw ParameterError("gaussian_matrix requires sigma > 0");
  }
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) m(i, j) = sigma * rng.next_gaussian();
  return m;
}

/// Uniform draw on the unit sphere in R^dim (Gaussian direction, normalized).
inline std::vector<double> sample_unit_sphere(RngState& rng, std::size_t dim) {
  if (dim == 0) throw ParameterError("sample_unit_sphere requires dim >= 1");
  std::vector<double> z(dim);
  double norm_sq = 0.0;
  do {
    norm_sq = 0.0;
    for (std::size_t i = 0; i < dim; ++i) {
      z[i] = rng.next_gaussian();
      norm_sq += z[i] * z[i];
    }
  } while (norm_sq == 0.0);
  const double inv = 1.0 / std::sqrt(norm_sq);
  for (double& v : z) v *= inv;
  return z;
}

}  // namespace loraflow
