// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>

#include "loraflow/matrix.hpp"
#include "loraflow/theta.hpp"

namespace loraflow {

enum class ObjectiveKind {
  TraceSquaredLowRank,   // g(B,A) = 1/2 Tr^2(W0 - BA), W0 square
  TraceSquaredFullRank,  // f(W)   = 1/2 Tr^2(W0 - W),  W0 square
  FrobeniusLowRank,      // h(B,A) = 1/2 |W0 - BA|^2
};

inline bool is_low_rank_kind(ObjectiveKind kind) {
  return kind != ObjectiveKind::TraceSquaredFullRank;
}

/// Immutable objective: a kind plus the frozen pretraining weights W0.
class Objective {
 public:
  Objective(ObjectiveKind kind, Matrix w0) : kind_(kind), w0_(std::move(w0)) {
    if (kind_ != ObjectiveKind::FrobeniusLowRank && w0_.rows() != w0_.cols()) {
      throw DimensionError("trace-squared objectives require square W0");
    }
  }

  ObjectiveKind kind() const { return kind_; }
  const Matrix& w0() const { return w0_; }

 private:
  ObjectiveKind kind_;
  Matrix w0_;
};

namespace detail {

inline void check_theta_dims(const Objective& obj, const ThetaPoint& theta) {
  if (theta.b.rows() != obj.w0().rows() || theta.a.cols() != obj.w0().cols()) {
    throw DimensionError("factor shapes incompatible with W0: B is " +
                         std::to_string(theta.b.rows()) + "x" +
                         std::to_string(theta.b.cols()) + ", A is " +
                         std::to_string(theta.a.rows()) + "x" +
                         std::to_string(theta.a.cols()));
  }
}

}  // namespace detail

/// Objective value at a factor pair (low-rank kinds only).
inline double value(const Objective& obj, const ThetaPoint& theta) {
  if (!is_low_rank_kind(obj.kind())) {
    throw UsageError("full-rank objective takes a Matrix argument");
  }
  detail::check_theta_dims(obj, theta);
  const Matrix residual = obj.w0() - theta.b * theta.a;
  if (obj.kind() == ObjectiveKind::TraceSquaredLowRank) {
    const double tr = trace(residual);
    return 0.5 * tr * tr;
  }
  return 0.5 * frobenius_norm_sq(residual);
}

/// Objective value at a full-rank iterate (TraceSquaredFullRank only).
inline double value(const Objective& obj, const Matrix& w) {
  if (obj.kind() != ObjectiveKind::TraceSquaredFullRank) {
    throw UsageError("low-rank objective takes a ThetaPoint argument");
  }
  if (!w.same_shape(obj.w0())) {
    throw DimensionError("iterate shape does not match W0");
  }
  const double tr = trace(obj.w0() - w);
  return 0.5 * tr * tr;
}

/// Pair of partial gradients (d/dB, d/dA) for the low-rank kinds.
inline ThetaPoint grad(const Objective& obj, const ThetaPoint& theta) {
  detail::check_theta_dims(obj, theta);
  switch (obj.kind()) {
    case ObjectiveKind::TraceSquaredLowRank: {
      const double tr = trace(obj.w0() - theta.b * theta.a);
      return ThetaPoint(-tr * transpose(theta.a), -tr * transpose(theta.b));
    }
    case ObjectiveKind::FrobeniusLowRank: {
      const Matrix residual = obj.w0() - theta.b * theta.a;
      return ThetaPoint(-1.0 * (residual * transpose(theta.a)),
                        -1.0 * (transpose(theta.b) * residual));
    }
    case ObjectiveKind::TraceSquaredFullRank:
      break;
  }
  throw UsageError("grad is for low-rank kinds; use grad_full");
}

/// Gradient of the full-rank trace-squared loss: -Tr(W0 - W) I.
inline Matrix grad_full(const Objective& obj, const Matrix& w) {
  if (obj.kind() != ObjectiveKind::TraceSquaredFullRank) {
    throw UsageError("grad_full is only for the full-rank kind");
  }
  if (!w.same_shape(obj.w0())) {
    throw DimensionError("iterate shape does not match W0");
  }
  return -trace(obj.w0() - w) * Matrix::identity(w.rows());
}

/// Upper bound sqrt(2) r' (|W0| + r'^2) on the gradient norm over the
/// domain {|B|, |A| <= r'}; identical for both low-rank kinds.
inline double gradient_norm_bound(const Objective& obj, double r_prime) {
  if (!is_low_rank_kind(obj.kind())) {
    throw UsageError("gradient_norm_bound is for low-rank kinds");
  }
  if (!(r_prime > 0.0)) throw ParameterError("r_prime must be positive");
  return std::sqrt(2.0) * r_prime *
         (frobenius_norm(obj.w0()) + r_prime * r_prime);
}

/// Lipschitz constant of the gradient over {|B|, |A| <= r'}:
/// 2(|Tr W0| + 2 r'^2) for the trace-squared kind and
/// 2(|W0| + 2 r'^2) for the Frobenius kind.
inline double lipschitz_bound(const Objective& obj, double r_prime) {
  if (!is_low_rank_kind(obj.kind())) {
    throw UsageError("lipschitz_bound is for low-rank kinds");
  }
  if (!(r_prime > 0.0)) throw ParameterError("r_prime must be positive");
  const double r_sq = r_prime * r_prime;
  if (obj.kind() == ObjectiveKind::TraceSquaredLowRank) {
    return 2.0 * (std::abs(trace(obj.w0())) + 2.0 * r_sq);
  }
  return 2.0 * (frobenius_norm(obj.w0()) + 2.0 * r_sq);
}

}  // namespace loraflow
