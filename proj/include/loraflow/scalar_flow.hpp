// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>

#include "loraflow/errors.hpp"

namespace loraflow {

/// Closed-form solution family for the residual flow
///
///   dy/dt = (c - y x) x,   dx/dt = (c - y x) y,   y(0) = 0, x(0)^2 = x0_sq,
///
/// which also governs Tr(W0 - Y(t)X(t)) in the matrix trace-squared flow
/// (c = Tr(W0), x0_sq = |X0|^2) and each singular-value channel under
/// spectral initialization (c = s0, x0_sq = x0^2).
///
/// The hyperbolic expressions grow like exp(sqrt(kappa1) t) and would
/// overflow near t ~ 700/sqrt(kappa1). All evaluations here factor that
/// exponential out analytically and work with the bounded terms
///   F(t) = exp(-sqrt(kappa1) t),  E(t) = exp(-z(t)),  z(t) = sqrt(kappa1) t + z0,
/// so every function is finite for all t >= 0.
class ScalarFlowKernel {
 public:
  ScalarFlowKernel(double c, double x0_sq) : c_(c), x0_sq_(x0_sq) {
    if (c == 0.0) {
      throw SaddleInitError(
          "saddle initialization: zero target (dynamics stall at the origin)");
    }
    if (!(x0_sq > 0.0)) {
      throw SaddleInitError(
          "saddle initialization: zero X0 (dynamics stall at the origin)");
    }
    abs_c_ = std::abs(c);
    sign_c_ = c > 0.0 ? 1.0 : -1.0;
    kappa1_ = x0_sq * x0_sq + 4.0 * c * c;
    sqrt_kappa1_ = std::sqrt(kappa1_);
    z0_ = std::asinh(x0_sq / (2.0 * abs_c_));
    kappa2_ = z0_ / sqrt_kappa1_;
    // exp(-z0) = 2|c| / (x0_sq + sqrt(kappa1)), computed without exp/log.
    exp_neg_z0_ = 2.0 * abs_c_ / (x0_sq + sqrt_kappa1_);
    half_exp_neg_z0_ = std::sqrt(exp_neg_z0_);
  }

  double c() const { return c_; }
  double x0_sq() const { return x0_sq_; }
  double kappa1() const { return kappa1_; }
  double kappa2() const { return kappa2_; }

  /// a(t) = sgn(c) kappa1 / (2 x0_sq sinh(z) + 4|c|), the residual c - y x.
  double a(double t) const {
    const double e = residual_exp(t);
    return sign_c_ * kappa1_ * e / denom_tilde(e);
  }

  /// Analytic derivative of a; opposite-signed to a(t).
  double a_prime(double t) const {
    const double e = residual_exp(t);
    const double d = denom_tilde(e);
    return -sign_c_ * x0_sq_ * kappa1_ * sqrt_kappa1_ * (1.0 + e * e) * e /
           (d * d);
  }

  double p(double t) const {
    const double f = decay(t);
    const double e = exp_neg_z0_ * f;
    return half_exp_neg_z0_ *
           (x0_sq_ * (1.0 - f) + sqrt_kappa1_ * (1.0 + f)) /
           (2.0 * std::sqrt(abs_c_ * denom_tilde(e)));
  }

  double q(double t) const {
    const double f = decay(t);
    const double e = exp_neg_z0_ * f;
    return half_exp_neg_z0_ * (1.0 - f) / std::sqrt(abs_c_ * denom_tilde(e));
  }

  /// p(t) q(t) c x0_sq: the scalar product y(t) x(t), and in the matrix
  /// setting Tr(Y(t) X(t)). Monotone from 0 toward the limit c.
  double product(double t) const { return p(t) * q(t) * c_ * x0_sq_; }

  double product_limit() const { return c_; }

  /// Earliest t with |a(t)| <= eps, from the exact inverse of a.
  double time_to_abs_residual(double eps) const {
    const double target = (kappa1_ / eps - 4.0 * abs_c_) / (2.0 * x0_sq_);
    if (target <= x0_sq_ / (2.0 * abs_c_)) return 0.0;
    const double t = (std::asinh(target) - z0_) / sqrt_kappa1_;
    return t > 0.0 ? t : 0.0;
  }

 private:
  // exp(-z(t)) with z = sqrt(kappa1)(t + kappa2); underflows cleanly to 0.
  double residual_exp(double t) const { return exp_neg_z0_ * decay(t); }
  double decay(double t) const { return std::exp(-sqrt_kappa1_ * t); }
  // s(t) = exp(z) * denom_tilde(E); strictly positive for all t >= 0.
  double denom_tilde(double e) const {
    return x0_sq_ * (1.0 - e * e) + 4.0 * abs_c_ * e;
  }

  double c_;
  double x0_sq_;
  double abs_c_;
  double sign_c_;
  double kappa1_;
  double sqrt_kappa1_;
  double kappa2_;
  double z0_;
  double exp_neg_z0_;
  double half_exp_neg_z0_;
};

}  // namespace loraflow
