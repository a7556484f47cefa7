// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "loraflow/matrix.hpp"
#include "loraflow/rng.hpp"

namespace loraflow {

struct ErrorStatsConfig {
  std::size_t n = 2;
  std::size_t r = 1;
  std::size_t trials = 100000;
  double sigma = 1.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (n == 0 || r == 0 || r > n) {
      throw ParameterError("require 1 <= r <= n");
    }
    if (trials < 1) throw ParameterError("trials must be >= 1");
    if (!(sigma > 0.0)) throw ParameterError("sigma must be positive");
  }
};

struct McEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t trials = 0;
};

namespace detail {

inline McEstimate summarize(const std::vector<double>& samples) {
  const std::size_t n = samples.size();
  double mean = 0.0;
  for (double v : samples) mean += v;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double v : samples) var += (v - mean) * (v - mean);
  var = (n > 1) ? var / static_cast<double>(n - 1) : 0.0;
  return McEstimate{mean, std::sqrt(var / static_cast<double>(n)), n};
}

inline std::size_t trial_thread_cap() {
  const char* env = std::getenv("LORA_FLOW_THREADS");
  if (env == nullptr) return 1;
  const long parsed = std::strtol(env, nullptr, 10);
  return parsed > 1 ? static_cast<std::size_t>(parsed) : 1;
}

// Runs fn(trial) for trial in [0, trials), filling a preallocated result
// slot per trial. Each trial derives its own seed, so the outcome is
// independent of how trials are scheduled across threads.
inline std::vector<double> run_trials(std::size_t trials,
                                      const std::function<double(std::size_t)>& fn) {
  std::vector<double> results(trials);
  const std::size_t threads = std::min(trial_thread_cap(), trials);
  if (threads <= 1) {
    for (std::size_t t = 0; t < trials; ++t) results[t] = fn(t);
    return results;
  }
  std::vector<std::thread> workers;
  workers.reserve(threads);
  for (std::size_t w = 0; w < threads; ++w) {
    workers.emplace_back([&, w]() {
      for (std::size_t t = w; t < trials; t += threads) results[t] = fn(t);
    });
  }
  for (auto& worker : workers) worker.join();
  return results;
}

}  // namespace detail

/// Exact relative approximation error of the rank-r minimizer against the
/// full-rank one: sqrt(n |X0^T X0|^2 - |X0|^4) / |X0|^2.
inline double relative_error_exact(const Matrix& x0, std::size_t n) {
  if (x0.cols() != n) {
    throw DimensionError("X0 must have n columns");
  }
  const double norm_sq = frobenius_norm_sq(x0);
  if (norm_sq == 0.0) {
    throw SaddleInitError("relative error undefined for zero X0");
  }
  const Matrix gram = transpose(x0) * x0;
  const double radicand = static_cast<double>(n) * frobenius_norm_sq(gram) -
                          norm_sq * norm_sq;
  // Non-negative by Cauchy-Schwarz on the eigenvalues of X0^T X0; clamp
  // the rounding residue when X0^T X0 is (nearly) a multiple of I.
  return std::sqrt(std::max(0.0, radicand)) / norm_sq;
}

/// E[squared relative error] = (n^2 + n - 2) / (nr + 2) over Gaussian X0.
inline double expected_sq_rel_error(std::size_t n, std::size_t r) {
  if (n == 0 || r == 0 || r > n) throw ParameterError("require 1 <= r <= n");
  const double nd = static_cast<double>(n);
  const double rd = static_cast<double>(r);
  return (nd * nd + nd - 2.0) / (nd * rd + 2.0);
}

/// Jensen upper bound on E[relative error]: sqrt of the squared-error mean.
inline double jensen_bound(std::size_t n, std::size_t r) {
  return std::sqrt(expected_sq_rel_error(n, r));
}

/// Monte Carlo estimates of the relative error over resampled X0; the
/// dynamics' limit is deterministic given X0, so only the initialization
/// is resampled.
struct RelErrorEstimates {
  McEstimate squared;
  McEstimate unsquared;
};

inline RelErrorEstimates mc_rel_error_estimates(const ErrorStatsConfig& cfg) {
  cfg.validate();
  if (cfg.trials < 100) throw ParameterError("need at least 100 trials");
  std::vector<double> sq(cfg.trials);
  std::vector<double> unsq(cfg.trials);
  detail::run_trials(cfg.trials, [&](std::size_t trial) {
    RngState rng(derive_seed(cfg.seed, trial));
    const Matrix x0 = gaussian_matrix(rng, cfg.r, cfg.n, cfg.sigma);
    const double e = relative_error_exact(x0, cfg.n);
    sq[trial] = e * e;
    unsq[trial] = e;
    return 0.0;
  });
  return RelErrorEstimates{detail::summarize(sq), detail::summarize(unsq)};
}

inline McEstimate mc_expected_sq_rel_error(const ErrorStatsConfig& cfg) {
  return mc_rel_error_estimates(cfg).squared;
}

/// Monte Carlo moments of a uniform unit-sphere vector z:
/// E[z_i^2] = 1/d, E[z_i^4] = 3/(d(d+2)), E[z_i^2 z_j^2] = 1/(d(d+2)),
/// and E[z_i z_j z_k z_l] = 0 for distinct indices (needs d >= 4).
struct SphereMoments {
  McEstimate second;          // z_1^2
  McEstimate fourth;          // z_1^4
  McEstimate cross_squares;   // z_1^2 z_2^2
  std::optional<McEstimate> distinct_product;  // z_1 z_2 z_3 z_4; absent if dim < 4
  std::size_t dim = 0;
};

inline SphereMoments sphere_moments(std::size_t dim, std::size_t trials,
                                    std::uint64_t seed) {
  if (dim < 2) throw ParameterError("sphere moments need dim >= 2");
  if (trials < 100) throw ParameterError("need at least 100 trials");
  std::vector<double> second(trials), fourth(trials), cross(trials);
  std::vector<double> distinct(dim >= 4 ? trials : 0);
  detail::run_trials(trials, [&](std::size_t trial) {
    RngState rng(derive_seed(seed, trial));
    const std::vector<double> z = sample_unit_sphere(rng, dim);
    second[trial] = z[0] * z[0];
    fourth[trial] = z[0] * z[0] * z[0] * z[0];
    cross[trial] = z[0] * z[0] * z[1] * z[1];
    if (dim >= 4) distinct[trial] = z[0] * z[1] * z[2] * z[3];
    return 0.0;
  });
  SphereMoments out;
  out.dim = dim;
  out.second = detail::summarize(second);
  out.fourth = detail::summarize(fourth);
  out.cross_squares = detail::summarize(cross);
  if (dim >= 4) out.distinct_product = detail::summarize(distinct);
  return out;
}

/// Monte Carlo moments of rho^2 = |g|^2 for standard Gaussian g in R^dim:
/// E[rho^2] = dim and E[rho^4] = dim (dim + 2) (chi-squared with dim dof).
struct ChiSqMoments {
  McEstimate second;  // rho^2
  McEstimate fourth;  // rho^4
  std::size_t dim = 0;
};

inline ChiSqMoments chi_sq_moments(std::size_t dim, std::size_t trials,
                                   std::uint64_t seed) {
  if (dim == 0) throw ParameterError("dim must be >= 1");
  if (trials < 100) throw ParameterError("need at least 100 trials");
  std::vector<double> second(trials), fourth(trials);
  detail::run_trials(trials, [&](std::size_t trial) {
    RngState rng(derive_seed(seed, trial));
    double norm_sq = 0.0;
    for (std::size_t i = 0; i < dim; ++i) {
      const double g = rng.next_gaussian();
      norm_sq += g * g;
    }
    second[trial] = norm_sq;
    fourth[trial] = norm_sq * norm_sq;
    return 0.0;
  });
  ChiSqMoments out;
  out.dim = dim;
  out.second = detail::summarize(second);
  out.fourth = detail::summarize(fourth);
  return out;
}

}  // namespace loraflow
