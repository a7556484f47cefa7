// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "loraflow/gradient_flow.hpp"
#include "loraflow/rng.hpp"
#include "loraflow/scalar_flow.hpp"
#include "loraflow/svd.hpp"

namespace loraflow {

/// Spectral initialization for the Frobenius low-rank flow: in the
/// singular basis of W0, Y~0 = 0 and X~0 is diagonal with r nonzero
/// Gaussian draws, which decouples the matrix ODE into scalar channels.
struct SpectralInit {
  SvdResult svd;                      // decomposition of W0
  std::size_t r = 0;
  std::vector<double> x_tilde_diag;   // r nonzero diagonal draws

  std::size_t n() const { return svd.u.rows(); }
  std::size_t m() const { return svd.v.rows(); }
};

/// One decoupled singular-value channel: dy/dt = (s0 - yx)x,
/// dx/dt = (s0 - yx)y from (0, x0). s0 must be positive (singular values
/// carry no sign, so no |.| branches), x0 nonzero.
struct ScalarDyn {
  double s0;
  double x0;
  double xi1;
  double xi2;

  ScalarDyn(double s0_in, double x0_in)
      : s0(s0_in), x0(x0_in), kernel_(make_kernel(s0_in, x0_in)) {
    xi1 = kernel_.kappa1();
    xi2 = kernel_.kappa2();
  }

  const ScalarFlowKernel& kernel() const { return kernel_; }

 private:
  static ScalarFlowKernel make_kernel(double s0, double x0) {
    if (!(s0 > 0.0)) {
      throw ParameterError("ScalarDyn requires a positive singular value");
    }
    if (x0 == 0.0) {
      throw SaddleInitError("ScalarDyn requires nonzero x0");
    }
    return ScalarFlowKernel(s0, x0 * x0);
  }

  ScalarFlowKernel kernel_;
};

/// y(t) x(t) for one channel; 0 at t = 0 and monotone toward s0.
inline double scalar_product_of_t(const ScalarDyn& dyn, double t) {
  if (t < 0.0) throw ParameterError("time must be >= 0");
  return dyn.kernel().product(t);
}

inline SpectralInit spectral_initialize(const Matrix& w0, std::size_t r,
                                        double sigma, std::uint64_t seed) {
  if (r == 0 || r > std::min(w0.rows(), w0.cols())) {
    throw ParameterError("require 1 <= r <= min(n, m)");
  }
  SpectralInit init;
  init.svd = svd(w0);
  init.r = r;
  const std::size_t rank = numerical_rank(init.svd);
  if (rank <= r) {
    throw RankAssumptionError("rank(W0) = " + std::to_string(rank) +
                              " must exceed r = " + std::to_string(r));
  }
  RngState rng(seed);
  init.x_tilde_diag.resize(r);
  for (std::size_t i = 0; i < r; ++i) {
    double draw = sigma * rng.next_gaussian();
    if (draw == 0.0) draw = sigma * rng.next_gaussian();  // probability-zero guard
    if (draw == 0.0) {
      throw SaddleInitError("zero diagonal draw after resample");
    }
    init.x_tilde_diag[i] = draw;
  }
  return init;
}

/// The (Y0, X0) implied by the rotated initialization: Y0 = 0 (n x r) and
/// X0 = X~0 V^T (r x m), so that Y0 X0 = 0.
inline ThetaPoint initial_theta(const SpectralInit& init) {
  Matrix x_tilde(init.r, init.m());
  for (std::size_t i = 0; i < init.r; ++i) {
    x_tilde(i, i) = init.x_tilde_diag[i];
  }
  return ThetaPoint(Matrix::zero(init.n(), init.r),
                    x_tilde * transpose(init.svd.v));
}

/// Y(t)X(t) reconstructed from the decoupled channels:
/// U diag(y_i(t) x_i(t), 0, ...) V^T. Rank <= r at every t.
inline Matrix closed_product_matrix(const SpectralInit& init, double t) {
  if (t < 0.0) throw ParameterError("time must be >= 0");
  Matrix core(init.n(), init.m());
  for (std::size_t i = 0; i < init.r; ++i) {
    const ScalarDyn dyn(init.svd.sigma[i], init.x_tilde_diag[i]);
    core(i, i) = scalar_product_of_t(dyn, t);
  }
  return init.svd.u * core * transpose(init.svd.v);
}

/// Best rank-r approximation by truncated SVD (Eckart-Young-Mirsky).
inline Matrix eym_truncation(const Matrix& w0, std::size_t r) {
  if (r > std::min(w0.rows(), w0.cols())) {
    throw ParameterError("truncation rank exceeds min(n, m)");
  }
  const SvdResult dec = svd(w0);
  Matrix core(w0.rows(), w0.cols());
  for (std::size_t i = 0; i < r; ++i) core(i, i) = dec.sigma[i];
  return dec.u * core * transpose(dec.v);
}

/// Optimal final loss 1/2 sum_{i>r} s_i^2 from the singular-value tail.
inline double final_loss(const Matrix& w0, std::size_t r) {
  if (r > std::min(w0.rows(), w0.cols())) {
    throw ParameterError("rank exceeds min(n, m)");
  }
  const SvdResult dec = svd(w0);
  double loss = 0.0;
  for (std::size_t i = r; i < dec.sigma.size(); ++i) {
    loss += dec.sigma[i] * dec.sigma[i];
  }
  return 0.5 * loss;
}

/// Side-by-side comparison of the integrated Frobenius flow, the
/// closed-form channel reconstruction, and the truncated-SVD optimum.
struct FlowVsEymReport {
  double t_star = 0.0;            // tail-bound horizon actually integrated to
  double ode_product_dev = 0.0;   // |Y(T*)X(T*) - truncation|
  double ode_loss = 0.0;          // 1/2 |W0 - Y(T*)X(T*)|^2
  double closed_product_dev = 0.0;
  double closed_loss = 0.0;
  double eym_loss = 0.0;          // 1/2 sum_{i>r} s_i^2
  bool spectral_gap_separated = true;  // s_r > s_{r+1}; limits unique only then
  Matrix ode_product;
  Matrix closed_product;
  Matrix truncation;
};

inline FlowVsEymReport flow_vs_eym(const Matrix& w0, std::size_t r,
                                   double sigma, std::uint64_t seed,
                                   const FlowConfig& flow_cfg,
                                   double tail_eps = 1e-10) {
  const SpectralInit init = spectral_initialize(w0, r, sigma, seed);

  double t_star = flow_cfg.horizon_T;
  for (std::size_t i = 0; i < r; ++i) {
    const ScalarDyn dyn(init.svd.sigma[i], init.x_tilde_diag[i]);
    t_star = std::max(t_star, dyn.kernel().time_to_abs_residual(tail_eps));
  }

  FlowConfig cfg = flow_cfg;
  cfg.horizon_T = t_star;
  const Objective obj(ObjectiveKind::FrobeniusLowRank, w0);
  const ThetaTrajectory flow = integrate_lora_flow(obj, initial_theta(init), cfg);
  t_star = flow.times.back();  // horizon rounded onto the integrator grid

  FlowVsEymReport report;
  report.t_star = t_star;
  report.truncation = eym_truncation(w0, r);
  report.eym_loss = final_loss(w0, r);
  if (r < init.svd.sigma.size()) {
    report.spectral_gap_separated = init.svd.sigma[r - 1] > init.svd.sigma[r];
  }

  const ThetaPoint& end = flow.states.back();
  report.ode_product = end.b * end.a;
  report.ode_product_dev = frobenius_norm(report.ode_product - report.truncation);
  report.ode_loss = 0.5 * frobenius_norm_sq(w0 - report.ode_product);

  report.closed_product = closed_product_matrix(init, t_star);
  report.closed_product_dev =
      frobenius_norm(report.closed_product - report.truncation);
  report.closed_loss = 0.5 * frobenius_norm_sq(w0 - report.closed_product);
  return report;
}

}  // namespace loraflow
