// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "loraflow/rng.hpp"

using loraflow::Matrix;
using loraflow::ParameterError;
using loraflow::RngState;
using loraflow::gaussian_matrix;
using loraflow::sample_unit_sphere;

TEST_CASE("identical seeds give bit-identical streams", "[core_linalg][rng]") {
  RngState a(42);
  RngState b(42);
  const Matrix ma = gaussian_matrix(a, 8, 8, 1.0);
  const Matrix mb = gaussian_matrix(b, 8, 8, 1.0);
  CHECK(ma == mb);

  RngState c(43);
  CHECK(!(gaussian_matrix(c, 8, 8, 1.0) == ma));
}

TEST_CASE("gaussian sample moments", "[core_linalg][rng]") {
  // 1e5-entry sample: mean within 3/sqrt(N) of 0, variance within 5% of sigma^2.
  const std::size_t n = 100000;
  {
    RngState unit(3);
    const Matrix m1 = gaussian_matrix(unit, 200, 500, 1.0);
    double mean1 = 0.0;
    for (double v : m1.entries()) mean1 += v;
    mean1 /= static_cast<double>(n);
    CHECK(std::abs(mean1) <= 3.0 / std::sqrt(static_cast<double>(n)));
  }
  RngState rng(7);
  const Matrix m = gaussian_matrix(rng, 200, 500, 2.0);
  double mean = 0.0;
  for (double v : m.entries()) mean += v;
  mean /= static_cast<double>(n);
  CHECK(std::abs(mean) <= 3.0 * 2.0 / std::sqrt(static_cast<double>(n)));

  double var = 0.0;
  for (double v : m.entries()) var += (v - mean) * (v - mean);
  var /= static_cast<double>(n - 1);
  CHECK(var == Catch::Approx(4.0).epsilon(0.05));

  CHECK_THROWS_AS(gaussian_matrix(rng, 2, 2, 0.0), ParameterError);
  CHECK_THROWS_AS(gaussian_matrix(rng, 2, 2, -1.0), ParameterError);
}

TEST_CASE("unit sphere samples are normalized", "[core_linalg][rng]") {
  RngState rng(11);
  for (int i = 0; i < 100; ++i) {
    const auto z = sample_unit_sphere(rng, 4);
    double norm_sq = 0.0;
    for (double v : z) norm_sq += v * v;
    CHECK(std::abs(std::sqrt(norm_sq) - 1.0) <= 1e-12);
  }
  CHECK_THROWS_AS(sample_unit_sphere(rng, 0), ParameterError);
}

TEST_CASE("unit sphere second and vanishing fourth moments", "[core_linalg][rng]") {
  const std::size_t trials = 100000;
  RngState rng(13);
  double sum_sq = 0.0;
  double sum_sq_sq = 0.0;
  double sum_prod = 0.0;
  double sum_prod_sq = 0.0;
  for (std::size_t i = 0; i < trials; ++i) {
    const auto z = sample_unit_sphere(rng, 4);
    sum_sq += z[0] * z[0];
    sum_sq_sq += z[0] * z[0] * z[0] * z[0];
    const double p = z[0] * z[1] * z[2] * z[3];
    sum_prod += p;
    sum_prod_sq += p * p;
  }
  const double nd = static_cast<double>(trials);
  const double mean_sq = sum_sq / nd;
  const double se_sq =
      std::sqrt((sum_sq_sq / nd - mean_sq * mean_sq) / nd);
  CHECK(std::abs(mean_sq - 0.25) <= 3.0 * se_sq);

  const double mean_prod = sum_prod / nd;
  const double se_prod =
      std::sqrt((sum_prod_sq / nd - mean_prod * mean_prod) / nd);
  CHECK(std::abs(mean_prod) <= 3.0 * se_prod);
}
