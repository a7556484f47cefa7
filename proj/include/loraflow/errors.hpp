// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace loraflow {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible or out-of-contract matrix shapes.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Operation called on an object whose kind/state does not support it.
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Scalar argument outside its admissible range.
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Iterative method hit its iteration cap without meeting tolerance.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double residual)
      : Error(what), residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_ = 0.0;
};

/// NaN/Inf appeared while iterating; names the offending step.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, std::size_t step_index)
      : Error(what), step_index_(step_index) {}
  std::size_t step_index() const { return step_index_; }

 private:
  std::size_t step_index_ = 0;
};

/// Query outside the time range covered by recorded data.
class RangeError : public Error {
 public:
  using Error::Error;
};

/// rank(W0) <= r, so the low-rank approximation assumption fails.
class RankAssumptionError : public Error {
 public:
  using Error::Error;
};

/// Initialization at a stationary saddle (Tr(W0) = 0 or X0 = 0):
/// the flow would stall at the all-zero state.
class SaddleInitError : public Error {
 public:
  using Error::Error;
};

}  // namespace loraflow
