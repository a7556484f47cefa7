// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>

#include "loraflow/matrix.hpp"

namespace loraflow {

/// Ordered pair (B, A) of low-rank factors. B is n x r, A is r x m;
/// the inner dimension r must agree.
struct ThetaPoint {
  Matrix b;
  Matrix a;

  ThetaPoint(Matrix b_in, Matrix a_in) : b(std::move(b_in)), a(std::move(a_in)) {
    if (b.cols() != a.rows()) {
      throw DimensionError("ThetaPoint inner dimension mismatch: B is " +
                           std::to_string(b.rows()) + "x" +
                           std::to_string(b.cols()) + ", A is " +
                           std::to_string(a.rows()) + "x" +
                           std::to_string(a.cols()));
    }
  }
};

inline ThetaPoint operator+(const ThetaPoint& x, const ThetaPoint& y) {
  return ThetaPoint(x.b + y.b, x.a + y.a);
}

inline ThetaPoint operator-(const ThetaPoint& x, const ThetaPoint& y) {
  return ThetaPoint(x.b - y.b, x.a - y.a);
}

inline ThetaPoint operator*(double s, const ThetaPoint& x) {
  return ThetaPoint(s * x.b, s * x.a);
}

/// Product norm on the pair space: sqrt(|B|^2 + |A|^2).
inline double theta_norm(const ThetaPoint& t) {
  return std::sqrt(frobenius_norm_sq(t.b) + frobenius_norm_sq(t.a));
}

inline bool is_finite(const ThetaPoint& t) {
  return is_finite(t.b) && is_finite(t.a);
}

}  // namespace loraflow
