// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include "loraflow/svd.hpp"
#include "support.hpp"

using loraflow::Matrix;
using loraflow::SvdResult;
using loraflow::frobenius_norm;
using loraflow::svd;
using loraflow::transpose;

namespace {

Matrix from_sigma(const SvdResult& d, std::size_t rows, std::size_t cols) {
  Matrix core(rows, cols);
  for (std::size_t i = 0; i < d.sigma.size(); ++i) core(i, i) = d.sigma[i];
  return d.u * core * transpose(d.v);
}

void check_factorization(const Matrix& m) {
  const SvdResult d = svd(m);
  REQUIRE(d.sigma.size() == std::min(m.rows(), m.cols()));
  for (std::size_t i = 0; i + 1 < d.sigma.size(); ++i) {
    REQUIRE(d.sigma[i] >= d.sigma[i + 1]);
  }
  for (double s : d.sigma) REQUIRE(s >= 0.0);
  REQUIRE(frobenius_norm(transpose(d.u) * d.u - Matrix::identity(m.rows())) <=
          1e-10);
  REQUIRE(frobenius_norm(transpose(d.v) * d.v - Matrix::identity(m.cols())) <=
          1e-10);
  REQUIRE(frobenius_norm(from_sigma(d, m.rows(), m.cols()) - m) <=
          1e-9 * std::max(1.0, frobenius_norm(m)));
}

}  // namespace

TEST_CASE("svd of diagonal matrix", "[core_linalg][svd]") {
  const Matrix m(3, 3, {3, 0, 0, 0, 2, 0, 0, 0, 1});
  const SvdResult d = svd(m);
  REQUIRE(d.sigma == std::vector<double>{3.0, 2.0, 1.0});
  // U and V are the identity up to column signs; sign convention makes the
  // first significant entry positive, so exactly the identity here.
  CHECK(frobenius_norm(d.u - Matrix::identity(3)) <= 1e-12);
  CHECK(frobenius_norm(d.v - Matrix::identity(3)) <= 1e-12);
}

TEST_CASE("svd of zero matrix", "[core_linalg][svd]") {
  const SvdResult d = svd(Matrix::zero(2, 3));
  REQUIRE(d.sigma == std::vector<double>{0.0, 0.0});
  check_factorization(Matrix::zero(2, 3));
}

TEST_CASE("svd reconstructs a seeded rectangular matrix", "[core_linalg][svd]") {
  const Matrix m = testsupport::random_matrix(5, 4, 2.0);
  check_factorization(m);
}

TEST_CASE("svd residuals across shapes and ranks", "[core_linalg][svd][property]") {
  for (std::size_t rows : {1u, 2u, 3u, 7u, 16u}) {
    for (std::size_t cols : {1u, 2u, 5u, 16u}) {
      check_factorization(testsupport::random_matrix(rows, cols, 3.0));
    }
  }
  // rank-deficient: products of thin factors
  check_factorization(testsupport::random_matrix(6, 2) *
                      testsupport::random_matrix(2, 5));
  check_factorization(testsupport::random_matrix(4, 1) *
                      testsupport::random_matrix(1, 4));
  // repeated singular values
  check_factorization(2.5 * Matrix::identity(4));
}

TEST_CASE("svd is deterministic and sign-fixed", "[core_linalg][svd]") {
  // Sign convention must hold for tall and wide inputs alike.
  for (const Matrix& m : {testsupport::random_matrix(6, 3),
                          testsupport::random_matrix(3, 6)}) {
    const SvdResult d1 = svd(m);
    const SvdResult d2 = svd(m);
    CHECK(d1.u == d2.u);
    CHECK(d1.v == d2.v);
    CHECK(d1.sigma == d2.sigma);
    for (std::size_t j = 0; j < d1.u.cols(); ++j) {
      double lead = 0.0;
      for (std::size_t i = 0; i < d1.u.rows(); ++i) {
        if (std::abs(d1.u(i, j)) > 1e-9) {
          lead = d1.u(i, j);
          break;
        }
      }
      CHECK(lead > 0.0);
    }
  }
}

TEST_CASE("svd at the 64x64 scale cap", "[core_linalg][svd]") {
  check_factorization(testsupport::random_matrix(64, 64, 2.0));
  CHECK_THROWS_AS(svd(Matrix(65, 4)), loraflow::DimensionError);
  CHECK_THROWS_AS(svd(Matrix(4, 65)), loraflow::DimensionError);
}
