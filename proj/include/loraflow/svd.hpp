// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "loraflow/matrix.hpp"

namespace loraflow {

/// Full decomposition input = U * diag(sigma) * V^T with U (n x n) and
/// V (m x m) orthogonal and sigma non-increasing of length min(n, m).
struct SvdResult {
  Matrix u;
  std::vector<double> sigma;
  Matrix v;
};

namespace detail {

inline double column_dot(const Matrix& m, std::size_t ci, std::size_t cj) {
  double s = 0.0;
  for (std::size_t k = 0; k < m.rows(); ++k) s += m(k, ci) * m(k, cj);
  return s;
}

inline void rotate_columns(Matrix& m, std::size_t ci, std::size_t cj, double c,
                           double s) {
  for (std::size_t k = 0; k < m.rows(); ++k) {
    const double vi = m(k, ci);
    const double vj = m(k, cj);
    m(k, ci) = c * vi - s * vj;
    m(k, cj) = s * vi + c * vj;
  }
}

// Fills the columns of `u` not marked in `slot_taken` with an orthonormal
// completion drawn from canonical basis vectors.
inline void complete_orthonormal_basis(Matrix& u, std::vector<bool>& slot_taken) {
  const std::size_t n = u.rows();
  std::size_t next_candidate = 0;
  for (std::size_t col = 0; col < n; ++col) {
    if (slot_taken[col]) continue;
    while (true) {
      if (next_candidate >= n) {
        throw ConvergenceError("orthonormal completion exhausted basis", 0.0);
      }
      std::vector<double> v(n, 0.0);
      v[next_candidate] = 1.0;
      ++next_candidate;
      // Two Gram-Schmidt passes keep orthogonality near machine precision.
      for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t j = 0; j < n; ++j) {
          if (!slot_taken[j]) continue;
          double dot = 0.0;
          for (std::size_t k = 0; k < n; ++k) dot += v[k] * u(k, j);
          for (std::size_t k = 0; k < n; ++k) v[k] -= dot * u(k, j);
        }
      }
      double norm_sq = 0.0;
      for (double x : v) norm_sq += x * x;
      if (norm_sq > 0.25) {
        const double inv = 1.0 / std::sqrt(norm_sq);
        for (std::size_t k = 0; k < n; ++k) u(k, col) = v[k] * inv;
        slot_taken[col] = true;
        break;
      }
    }
  }
}

// Jacobi core for tall inputs (rows >= cols); no sign convention yet.
inline SvdResult svd_tall(const Matrix& m) {
  const std::size_t n = m.rows();
  const std::size_t p = m.cols();
  Matrix work = m;
  Matrix v = Matrix::identity(p);
  const double tol = 1e-13 * frobenius_norm(m);

  bool converged = false;
  for (int sweep = 0; sweep < 100 && !converged; ++sweep) {
    bool rotated = false;
    for (std::size_t i = 0; i + 1 < p; ++i) {
      for (std::size_t j = i + 1; j < p; ++j) {
        const double gamma = column_dot(work, i, j);
        if (std::abs(gamma) <= tol) continue;
        const double alpha = column_dot(work, i, i);
        const double beta = column_dot(work, j, j);
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        rotate_columns(work, i, j, c, s);
        rotate_columns(v, i, j, c, s);
        rotated = true;
      }
    }
    converged = !rotated;
  }
  if (!converged) {
    double residual = 0.0;
    for (std::size_t i = 0; i + 1 < p; ++i)
      for (std::size_t j = i + 1; j < p; ++j)
        residual = std::max(residual, std::abs(column_dot(work, i, j)));
    if (residual > tol) {
      throw ConvergenceError(
          "jacobi svd did not converge in 100 sweeps (residual " +
              std::to_string(residual) + ")",
          residual);
    }
  }

  std::vector<double> norms(p);
  for (std::size_t j = 0; j < p; ++j) {
    norms[j] = std::sqrt(column_dot(work, j, j));
  }
  std::vector<std::size_t> order(p);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return norms[a] > norms[b]; });

  SvdResult out{Matrix(n, n), std::vector<double>(p), Matrix(p, p)};
  std::vector<bool> slot_taken(n, false);
  const double zero_tol = tol;  // below this a column direction is numerical noise
  for (std::size_t j = 0; j < p; ++j) {
    const std::size_t src = order[j];
    out.sigma[j] = norms[src];
    for (std::size_t k = 0; k < p; ++k) out.v(k, j) = v(k, src);
    if (norms[src] > zero_tol) {
      const double inv = 1.0 / norms[src];
      for (std::size_t k = 0; k < n; ++k) out.u(k, j) = work(k, src) * inv;
      slot_taken[j] = true;
    }
  }
  complete_orthonormal_basis(out.u, slot_taken);
  return out;
}

}  // namespace detail

/// One-sided Jacobi SVD for dense matrices up to 64 x 64.
///
/// Rotations sweep column pairs of the (tall) working copy until every
/// off-diagonal Gram entry falls below 1e-13 * |input|, capped at 100
/// sweeps. Singular values are sorted non-increasing with a stable sort;
/// each left singular vector is sign-fixed so its first significant entry
/// is positive (the paired right vector flips with it).
inline SvdResult svd(const Matrix& m) {
  if (m.empty()) throw DimensionError("svd of empty matrix");
  if (m.rows() > 64 || m.cols() > 64) {
    throw DimensionError("svd supports matrices up to 64x64");
  }
  SvdResult out = [&] {
    if (m.rows() >= m.cols()) return detail::svd_tall(m);
    SvdResult t = detail::svd_tall(transpose(m));
    return SvdResult{std::move(t.v), std::move(t.sigma), std::move(t.u)};
  }();

  const std::size_t n = out.u.rows();
  const std::size_t paired = out.sigma.size();
  for (std::size_t j = 0; j < n; ++j) {
    double col_max = 0.0;
    for (std::size_t k = 0; k < n; ++k)
      col_max = std::max(col_max, std::abs(out.u(k, j)));
    const double significant = 1e-12 * col_max;
    double lead = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      if (std::abs(out.u(k, j)) > significant) {
        lead = out.u(k, j);
        break;
      }
    }
    if (lead < 0.0) {
      for (std::size_t k = 0; k < n; ++k) out.u(k, j) = -out.u(k, j);
      if (j < paired) {
        for (std::size_t k = 0; k < out.v.rows(); ++k) out.v(k, j) = -out.v(k, j);
      }
    }
  }
  return out;
}

/// Count of singular values above threshold_ratio * sigma_max.
inline std::size_t numerical_rank(const SvdResult& decomposition,
                                  double threshold_ratio = 1e-10) {
  if (decomposition.sigma.empty()) return 0;
  const double cutoff = threshold_ratio * decomposition.sigma.front();
  std::size_t rank = 0;
  for (double s : decomposition.sigma) {
    if (s > cutoff) ++rank;
  }
  return rank;
}

}  // namespace loraflow
