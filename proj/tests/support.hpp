// SPDX-License-Identifier: Apache-2.0
//
// Test-only oracles. Everything here is deliberately independent of the
// library code paths it is used to check: finite differences instead of
// analytic gradients, a local RK4 on std::vector instead of the library
// integrator, Gaussian elimination instead of any library solver.
#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "loraflow/matrix.hpp"
#include "loraflow/objectives.hpp"
#include "loraflow/theta.hpp"

namespace testsupport {

using loraflow::Matrix;
using loraflow::Objective;
using loraflow::ThetaPoint;

// Central finite-difference gradient of value() in every factor entry.
inline ThetaPoint fd_grad(const Objective& obj, const ThetaPoint& theta,
                          double step = 1e-5) {
  Matrix gb(theta.b.rows(), theta.b.cols());
  Matrix ga(theta.a.rows(), theta.a.cols());
  for (std::size_t i = 0; i < theta.b.rows(); ++i) {
    for (std::size_t j = 0; j < theta.b.cols(); ++j) {
      ThetaPoint plus = theta;
      ThetaPoint minus = theta;
      plus.b(i, j) += step;
      minus.b(i, j) -= step;
      gb(i, j) = (value(obj, plus) - value(obj, minus)) / (2.0 * step);
    }
  }
  for (std::size_t i = 0; i < theta.a.rows(); ++i) {
    for (std::size_t j = 0; j < theta.a.cols(); ++j) {
      ThetaPoint plus = theta;
      ThetaPoint minus = theta;
      plus.a(i, j) += step;
      minus.a(i, j) -= step;
      ga(i, j) = (value(obj, plus) - value(obj, minus)) / (2.0 * step);
    }
  }
  return ThetaPoint(gb, ga);
}

inline Matrix fd_grad_full(const Objective& obj, const Matrix& w,
                           double step = 1e-5) {
  Matrix g(w.rows(), w.cols());
  for (std::size_t i = 0; i < w.rows(); ++i) {
    for (std::size_t j = 0; j < w.cols(); ++j) {
      Matrix plus = w;
      Matrix minus = w;
      plus(i, j) += step;
      minus(i, j) -= step;
      g(i, j) = (value(obj, plus) - value(obj, minus)) / (2.0 * step);
    }
  }
  return g;
}

// Classical RK4 on a plain vector state; the reference path for all
// closed-form checks.
inline std::vector<double> rk4(
    std::vector<double> state,
    const std::function<std::vector<double>(const std::vector<double>&)>& rhs,
    double t_end, double h) {
  const auto steps = static_cast<std::size_t>(std::llround(t_end / h));
  for (std::size_t s = 0; s < steps; ++s) {
    const auto k1 = rhs(state);
    auto mid = state;
    for (std::size_t i = 0; i < state.size(); ++i) mid[i] = state[i] + 0.5 * h * k1[i];
    const auto k2 = rhs(mid);
    for (std::size_t i = 0; i < state.size(); ++i) mid[i] = state[i] + 0.5 * h * k2[i];
    const auto k3 = rhs(mid);
    for (std::size_t i = 0; i < state.size(); ++i) mid[i] = state[i] + h * k3[i];
    const auto k4 = rhs(mid);
    for (std::size_t i = 0; i < state.size(); ++i) {
      state[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
  }
  return state;
}

// Scalar channel system dy/dt = (c - yx)x, dx/dt = (c - yx)y from (0, x0).
inline std::array<double, 2> scalar_channel_rk4(double c, double x0, double t,
                                                double h = 1e-4) {
  const auto rhs = [c](const std::vector<double>& s) {
    const double residual = c - s[0] * s[1];
    return std::vector<double>{residual * s[1], residual * s[0]};
  };
  const auto end = rk4({0.0, x0}, rhs, t, h);
  return {end[0], end[1]};
}

// Second-order residual ODE a'' = a'^2/a + 4a^3 - 4ca^2 as a first-order
// system in (a, a'), from (c, -c * x0_sq).
inline std::array<double, 2> residual_ode_rk4(double c, double x0_sq, double t,
                                              double h = 1e-5) {
  const auto rhs = [c](const std::vector<double>& s) {
    return std::vector<double>{s[1],
                               s[1] * s[1] / s[0] + 4.0 * s[0] * s[0] * s[0] -
                                   4.0 * c * s[0] * s[0]};
  };
  const auto end = rk4({c, -c * x0_sq}, rhs, t, h);
  return {end[0], end[1]};
}

// Gauss-Jordan inverse with partial pivoting; small matrices only.
inline Matrix invert(const Matrix& m) {
  const std::size_t n = m.rows();
  Matrix a = m;
  Matrix inv = Matrix::identity(n);
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t row = col + 1; row < n; ++row) {
      if (std::abs(a(row, col)) > std::abs(a(pivot, col))) pivot = row;
    }
    for (std::size_t j = 0; j < n; ++j) {
      std::swap(a(col, j), a(pivot, j));
      std::swap(inv(col, j), inv(pivot, j));
    }
    const double d = a(col, col);
    for (std::size_t j = 0; j < n; ++j) {
      a(col, j) /= d;
      inv(col, j) /= d;
    }
    for (std::size_t row = 0; row < n; ++row) {
      if (row == col) continue;
      const double f = a(row, col);
      for (std::size_t j = 0; j < n; ++j) {
        a(row, j) -= f * a(col, j);
        inv(row, j) -= f * inv(col, j);
      }
    }
  }
  return inv;
}

// Deterministic test randomness, independent of the library RNG.
inline std::mt19937_64& test_rng() {
  static std::mt19937_64 engine(0xC0FFEEull);
  return engine;
}

inline Matrix random_matrix(std::size_t rows, std::size_t cols,
                            double scale = 1.0) {
  std::normal_distribution<double> dist(0.0, scale);
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) m(i, j) = dist(test_rng());
  return m;
}

inline ThetaPoint random_theta(std::size_t n, std::size_t r, std::size_t m,
                               double scale = 1.0) {
  return ThetaPoint(random_matrix(n, r, scale), random_matrix(r, m, scale));
}

// Draw within the bounded domain {|B| <= r_prime, |A| <= r_prime}:
// Gaussian draw, then rescale any member whose norm exceeds the bound.
inline ThetaPoint random_theta_in_domain(std::size_t n, std::size_t r,
                                         std::size_t m, double r_prime) {
  ThetaPoint theta = random_theta(n, r, m, r_prime);
  const double nb = loraflow::frobenius_norm(theta.b);
  const double na = loraflow::frobenius_norm(theta.a);
  if (nb > r_prime) theta.b = (r_prime / nb) * theta.b;
  if (na > r_prime) theta.a = (r_prime / na) * theta.a;
  return theta;
}

inline double rel_error(double got, double want) {
  return std::abs(got - want) / std::max(1.0, std::abs(want));
}

}  // namespace testsupport
