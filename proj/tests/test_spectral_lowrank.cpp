// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include "loraflow/spectral_lowrank.hpp"
#include "support.hpp"

using loraflow::FlowConfig;
using loraflow::Matrix;
using loraflow::ObjectiveKind;
using loraflow::RankAssumptionError;
using loraflow::ScalarDyn;
using loraflow::SpectralInit;
using loraflow::ThetaPoint;
using loraflow::closed_product_matrix;
using loraflow::eym_truncation;
using loraflow::final_loss;
using loraflow::flow_vs_eym;
using loraflow::frobenius_norm;
using loraflow::frobenius_norm_sq;
using loraflow::initial_theta;
using loraflow::scalar_product_of_t;
using loraflow::spectral_initialize;
using loraflow::transpose;

namespace {

Matrix diag3(double a, double b, double c) {
  Matrix m(3, 3);
  m(0, 0) = a;
  m(1, 1) = b;
  m(2, 2) = c;
  return m;
}

}  // namespace

TEST_CASE("spectral initialization", "[spectral_lowrank]") {
  const Matrix w0 = diag3(3, 2, 1);
  const SpectralInit init = spectral_initialize(w0, 2, 1.0, 42);
  REQUIRE(init.x_tilde_diag.size() == 2);
  for (double x : init.x_tilde_diag) REQUIRE(x != 0.0);

  // Implied theta: Y0 X0 = 0 and X0 = X~0 V^T.
  const ThetaPoint theta0 = initial_theta(init);
  CHECK(frobenius_norm(theta0.b) == 0.0);
  CHECK(frobenius_norm(theta0.b * theta0.a) == 0.0);
  CHECK(theta0.a.rows() == 2);
  CHECK(theta0.a.cols() == 3);

  // Rank assumption: a rank-1 matrix cannot host r = 1.
  const Matrix rank1 = testsupport::random_matrix(3, 1) *
                       testsupport::random_matrix(1, 3);
  CHECK_THROWS_AS(spectral_initialize(rank1, 1, 1.0, 1), RankAssumptionError);

  // Determinism.
  const SpectralInit again = spectral_initialize(w0, 2, 1.0, 42);
  CHECK(again.x_tilde_diag == init.x_tilde_diag);
}

TEST_CASE("scalar channel closed form", "[spectral_lowrank]") {
  const ScalarDyn dyn(2.0, 1.0);
  CHECK(dyn.xi1 == Catch::Approx(17.0));
  CHECK(scalar_product_of_t(dyn, 0.0) == 0.0);
  CHECK(std::abs(scalar_product_of_t(dyn, 50.0) - 2.0) <= 1e-10);

  // Independent scalar RK4 oracle at t in {0.5, 1, 3}.
  for (double t : {0.5, 1.0, 3.0}) {
    const auto oracle = testsupport::scalar_channel_rk4(2.0, 1.0, t);
    REQUIRE(std::abs(scalar_product_of_t(dyn, t) - oracle[0] * oracle[1]) <= 1e-6);
  }

  // Negative x0 drives the same product (only x0^2 enters).
  const ScalarDyn neg(2.0, -1.0);
  for (double t : {0.5, 1.0, 3.0}) {
    REQUIRE(scalar_product_of_t(neg, t) ==
            Catch::Approx(scalar_product_of_t(dyn, t)).epsilon(1e-14));
  }

  CHECK_THROWS_AS(ScalarDyn(0.0, 1.0), loraflow::ParameterError);
  CHECK_THROWS_AS(ScalarDyn(-1.0, 1.0), loraflow::ParameterError);
  CHECK_THROWS_AS(ScalarDyn(2.0, 0.0), loraflow::SaddleInitError);
}

TEST_CASE("per-channel monotonicity and ordering", "[spectral_lowrank][property]") {
  const ScalarDyn top(3.0, 0.5);
  const ScalarDyn mid(2.0, 0.5);
  double prev_top = -1.0;
  for (double t : {0.0, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0}) {
    const double yt = scalar_product_of_t(top, t);
    REQUIRE(yt >= prev_top);  // non-decreasing toward s0
    REQUIRE(yt <= 3.0 + 1e-12);
    prev_top = yt;
    // Equal |x0| magnitudes preserve the singular-value ordering.
    REQUIRE(yt + 1e-15 >= scalar_product_of_t(mid, t));
  }
}

TEST_CASE("closed product matrix", "[spectral_lowrank]") {
  const Matrix w0 = diag3(3, 2, 1);
  const SpectralInit init = spectral_initialize(w0, 2, 1.0, 7);
  CHECK(frobenius_norm(closed_product_matrix(init, 0.0)) == 0.0);
  CHECK(frobenius_norm(closed_product_matrix(init, 50.0) - diag3(3, 2, 0)) <=
        1e-8);

  // U^T M V diagonal at every sampled t by construction.
  for (double t : {0.3, 1.0, 5.0}) {
    const Matrix m = closed_product_matrix(init, t);
    const Matrix rotated = transpose(init.svd.u) * m * init.svd.v;
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j)
        if (i != j) REQUIRE(std::abs(rotated(i, j)) <= 1e-10);
  }
}

TEST_CASE("eym truncation and final loss", "[spectral_lowrank]") {
  const Matrix w0 = diag3(3, 2, 1);
  CHECK(frobenius_norm(eym_truncation(w0, 1) - diag3(3, 0, 0)) <= 1e-12);
  CHECK(frobenius_norm(eym_truncation(w0, 3) - w0) <= 1e-9);
  CHECK(final_loss(w0, 2) == Catch::Approx(0.5));
  CHECK(final_loss(w0, 3) == 0.0);

  for (int i = 0; i < 10; ++i) {
    const Matrix m = testsupport::random_matrix(4, 3, 2.0);
    for (std::size_t r = 1; r <= 3; ++r) {
      const double direct = 0.5 * frobenius_norm_sq(m - eym_truncation(m, r));
      REQUIRE(std::abs(direct - final_loss(m, r)) <= 1e-10);
    }
  }
}

TEST_CASE("diagonality is preserved along the matrix flow",
          "[spectral_lowrank][property]") {
  const Matrix w0 = testsupport::random_matrix(4, 3, 2.0);
  const SpectralInit init = spectral_initialize(w0, 2, 1.0, 3);
  const loraflow::Objective obj(ObjectiveKind::FrobeniusLowRank, w0);
  const loraflow::ThetaTrajectory flow =
      integrate_lora_flow(obj, initial_theta(init), FlowConfig{1e-3, 5.0, 50});
  for (const ThetaPoint& state : flow.states) {
    const Matrix y_rot = transpose(init.svd.u) * state.b;   // n x r
    const Matrix x_rot = state.a * init.svd.v;              // r x m
    for (std::size_t i = 0; i < y_rot.rows(); ++i)
      for (std::size_t j = 0; j < y_rot.cols(); ++j)
        if (i != j) REQUIRE(std::abs(y_rot(i, j)) <= 1e-10);
    for (std::size_t i = 0; i < x_rot.rows(); ++i)
      for (std::size_t j = 0; j < x_rot.cols(); ++j)
        if (i != j) REQUIRE(std::abs(x_rot(i, j)) <= 1e-10);
  }

  // Closed-form product reproduces the full matrix flow along the way.
  for (std::size_t i = 0; i < flow.times.size(); ++i) {
    const Matrix product = flow.states[i].b * flow.states[i].a;
    REQUIRE(frobenius_norm(product - closed_product_matrix(init, flow.times[i])) <=
            1e-6);
  }
}

TEST_CASE("flow reaches the eym optimum", "[spectral_lowrank]") {
  const Matrix w0 = diag3(3, 2, 1);
  for (std::size_t r : {1u, 2u}) {
    const auto report = flow_vs_eym(w0, r, 1.0, 11, FlowConfig{1e-3, 5.0, 100});
    INFO("r=" << r << " dev=" << report.ode_product_dev);
    CHECK(report.ode_product_dev <= 1e-6);
    CHECK(std::abs(report.ode_loss - report.eym_loss) <= 1e-8);
    CHECK(report.closed_product_dev <= 1e-8);
    CHECK(report.spectral_gap_separated);
  }

  const Matrix random_w0 = testsupport::random_matrix(4, 3, 2.0);
  const auto report = flow_vs_eym(random_w0, 2, 1.0, 13, FlowConfig{1e-3, 5.0, 100});
  CHECK(report.ode_product_dev <= 1e-5);
  CHECK(std::abs(report.ode_loss - report.eym_loss) <= 1e-8);

  // r = rank rejected, r = rank - 1 accepted.
  CHECK_THROWS_AS(flow_vs_eym(w0, 3, 1.0, 1, FlowConfig{1e-3, 1.0, 100}),
                  RankAssumptionError);
  CHECK_NOTHROW(flow_vs_eym(w0, 2, 1.0, 1, FlowConfig{1e-3, 1.0, 100}));
}
