// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>

#include "loraflow/matrix.hpp"
#include "loraflow/scalar_flow.hpp"
#include "loraflow/theta.hpp"

namespace loraflow {

/// Instance constants of the trace-squared closed form:
/// c = Tr(W0), |X0|^2, kappa1 = |X0|^4 + 4c^2,
/// kappa2 = arsinh(|X0|^2 / (2|c|)) / sqrt(kappa1).
/// Construction rejects c = 0 and |X0| = 0 (saddle initialization).
struct TraceFlowConstants {
  double c;
  double x0_norm_sq;
  double kappa1;
  double kappa2;
};

/// Closed-form trajectory of the trace-squared low-rank flow started at
/// (Y0, X0) = (0, X0):  Y(t) = q(t) Tr(W0) X0^T,  X(t) = p(t) X0.
class TraceClosedForm {
 public:
  TraceClosedForm(Matrix w0, Matrix x0)
      : w0_(std::move(w0)),
        x0_(std::move(x0)),
        kernel_(trace(w0_), frobenius_norm_sq(x0_)) {
    if (x0_.cols() != w0_.rows() || w0_.rows() != w0_.cols()) {
      throw DimensionError("X0 must be r x n with W0 n x n");
    }
  }

  const Matrix& w0() const { return w0_; }
  const Matrix& x0() const { return x0_; }
  const ScalarFlowKernel& kernel() const { return kernel_; }

  TraceFlowConstants constants() const {
    return TraceFlowConstants{kernel_.c(), kernel_.x0_sq(), kernel_.kappa1(),
                              kernel_.kappa2()};
  }

 private:
  Matrix w0_;
  Matrix x0_;  // r x n
  ScalarFlowKernel kernel_;
};

/// a(t) = Tr(W0 - Y(t)X(t)); monotone in |.|, sign fixed at sgn(Tr W0).
inline double a_of_t(const TraceClosedForm& cf, double t) {
  return cf.kernel().a(t);
}

inline double a_prime_of_t(const TraceClosedForm& cf, double t) {
  return cf.kernel().a_prime(t);
}

/// Self-consistency residual of the governing second-order ODE
/// a'' = a'^2/a + 4a^3 - 4ca^2, with a'' from central finite differences of
/// the analytic a'. Near the tail all terms vanish and the residual is ~0.
inline double a_ode_residual(const TraceClosedForm& cf, double t,
                             double fd_step = 1e-5) {
  const auto& kernel = cf.kernel();
  const double h = (t > fd_step) ? fd_step : 0.5 * t;
  if (h == 0.0) return 0.0;
  const double second =
      (kernel.a_prime(t + h) - kernel.a_prime(t - h)) / (2.0 * h);
  const double a = kernel.a(t);
  const double ap = kernel.a_prime(t);
  const double c = kernel.c();
  const double curvature_term = (a != 0.0) ? (ap * ap / a) : 0.0;
  const double rhs = curvature_term + 4.0 * a * a * a - 4.0 * c * a * a;
  return std::abs(second - rhs);
}

inline double p_of_t(const TraceClosedForm& cf, double t) {
  return cf.kernel().p(t);
}

inline double q_of_t(const TraceClosedForm& cf, double t) {
  return cf.kernel().q(t);
}

/// (Y(t), X(t)) = (q(t) Tr(W0) X0^T, p(t) X0).
inline ThetaPoint closed_trajectory(const TraceClosedForm& cf, double t) {
  if (t < 0.0) throw ParameterError("trajectory time must be >= 0");
  const double q = q_of_t(cf, t);
  const double p = p_of_t(cf, t);
  return ThetaPoint((q * cf.kernel().c()) * transpose(cf.x0()), p * cf.x0());
}

/// lim_{t->inf} Y(t)X(t) = Tr(W0)/|X0|^2 * X0^T X0; rank <= r and
/// Tr = Tr(W0) up to floating point.
inline Matrix limit_product(const TraceClosedForm& cf) {
  const double scale = cf.kernel().c() / cf.kernel().x0_sq();
  return scale * (transpose(cf.x0()) * cf.x0());
}

/// Smallest horizon with |a(t)| <= eps; the principled stand-in for
/// "t -> infinity" in experiments.
inline double tail_horizon(const TraceClosedForm& cf, double eps = 1e-10) {
  return cf.kernel().time_to_abs_residual(eps);
}

/// Full-rank closed form U(t) = (1 - e^{-nt})/n Tr(W0 - U0) I + U0.
inline Matrix full_rank_solution(const Matrix& w0, const Matrix& u0, double t) {
  if (w0.rows() != w0.cols() || !w0.same_shape(u0)) {
    throw DimensionError("full_rank_solution requires square W0 and matching U0");
  }
  const double n = static_cast<double>(w0.rows());
  const double residual0 = trace(w0 - u0);
  const double coeff = -std::expm1(-n * t) / n;  // (1 - e^{-nt}) / n
  return (coeff * residual0) * Matrix::identity(w0.rows()) + u0;
}

/// lim_{t->inf} U(t) = (1/n) Tr(W0 - U0) I + U0.
inline Matrix full_rank_limit(const Matrix& w0, const Matrix& u0) {
  if (w0.rows() != w0.cols() || !w0.same_shape(u0)) {
    throw DimensionError("full_rank_limit requires square W0 and matching U0");
  }
  const double n = static_cast<double>(w0.rows());
  return (trace(w0 - u0) / n) * Matrix::identity(w0.rows()) + u0;
}

/// Smallest t with |Tr(W0 - U(t))| = e^{-nt} |Tr(W0 - U0)| <= eps.
inline double full_rank_tail_horizon(const Matrix& w0, const Matrix& u0,
                                     double eps = 1e-10) {
  const double residual0 = std::abs(trace(w0 - u0));
  if (residual0 <= eps) return 0.0;
  return std::log(residual0 / eps) / static_cast<double>(w0.rows());
}

}  // namespace loraflow
