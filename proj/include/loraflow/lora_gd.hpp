// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "loraflow/objectives.hpp"

namespace loraflow {

/// Settings for the generalized (lambda, k) LoRA gradient-descent scheme.
/// lambda = 1 reproduces simultaneous updates (both factors advance on data
/// from the previous outer iteration); lambda = 0 is fully sequential.
struct GdConfig {
  double alpha = 1e-3;
  double lambda = 1.0;
  std::size_t k = 1;
  std::size_t max_outer_iters = 1000;
  double stop_grad_norm = 0.0;
  double r_prime = 1e6;  // domain bound, diagnostic only

  void validate() const {
    if (!(alpha > 0.0)) throw ParameterError("alpha must be positive");
    if (!(lambda >= 0.0 && lambda <= 1.0)) {
      throw ParameterError("lambda must lie in [0, 1]");
    }
    if (k == 0) throw ParameterError("k must be >= 1");
    if (max_outer_iters == 0) throw ParameterError("max_outer_iters must be >= 1");
    if (stop_grad_norm < 0.0) throw ParameterError("stop_grad_norm must be >= 0");
    if (!(r_prime > 0.0)) throw ParameterError("r_prime must be positive");
  }
};

/// Every inner step of a run: steps[q] = (B_q, A_q) for global step index
/// q = 0 .. outer_iters_run * k. Inner-step granularity is required because
/// the affine interpolation formulas index inner steps.
struct IterateLog {
  double alpha = 0.0;
  double lambda = 0.0;
  std::size_t k = 1;
  std::vector<ThetaPoint> steps;
  std::vector<std::size_t> domain_violations;  // steps with |B| or |A| > r_prime
  std::size_t outer_iters_run = 0;
  bool stopped_by_grad_norm = false;
  // Final (B*, A*) of the scheme; the algorithm's output product is star.b * star.a.
  std::optional<ThetaPoint> star;

  std::size_t last_step_index() const { return steps.size() - 1; }
  double horizon() const { return alpha * static_cast<double>(last_step_index()); }
};

/// Divergence during gradient descent; carries the partial log for
/// post-mortem of step-size sweeps.
class GdDivergenceError : public DivergenceError {
 public:
  GdDivergenceError(std::size_t step_index, IterateLog partial)
      : DivergenceError(
            "gradient descent diverged (NaN/Inf) at inner step " +
                std::to_string(step_index),
            step_index),
        partial_log_(std::move(partial)) {}
  const IterateLog& partial_log() const { return partial_log_; }

 private:
  IterateLog partial_log_;
};

/// Generalized LoRA gradient descent.
///
/// Each outer iteration i performs, in global-step indexing q = ik + j:
///   stage 1:  B_{q+1} = B_q - alpha * grad_B(B_q, A_{ik})          j = 0..k-1
///   combine:  B* = lambda B_{ik} + (1 - lambda) B_{(i+1)k}
///   stage 2:  A_{q+1} = A_q - alpha * grad_A(B*, A_q)              j = 0..k-1
/// The convergence check evaluates the gradient at (B*, A*) at the top of
/// each outer loop and stops once theta_norm falls below stop_grad_norm.
inline IterateLog run_lora_gd(const Objective& obj, const ThetaPoint& theta0,
                              const GdConfig& cfg) {
  if (!is_low_rank_kind(obj.kind())) {
    throw UsageError("run_lora_gd requires a low-rank objective");
  }
  cfg.validate();
  detail::check_theta_dims(obj, theta0);
  if (!is_finite(theta0)) {
    throw ParameterError("theta0 must be finite");
  }

  IterateLog log;
  log.alpha = cfg.alpha;
  log.lambda = cfg.lambda;
  log.k = cfg.k;
  log.steps.reserve(cfg.max_outer_iters * cfg.k + 1);
  log.steps.push_back(theta0);

  Matrix b = theta0.b;
  Matrix a = theta0.a;
  Matrix b_star = b;
  Matrix a_star = a;

  const auto flag_domain = [&](const Matrix& bq, const Matrix& aq,
                               std::size_t q) {
    if (frobenius_norm(bq) > cfg.r_prime || frobenius_norm(aq) > cfg.r_prime) {
      log.domain_violations.push_back(q);
    }
  };
  flag_domain(b, a, 0);

  for (std::size_t outer = 0; outer < cfg.max_outer_iters; ++outer) {
    const ThetaPoint current_star(b_star, a_star);
    if (theta_norm(grad(obj, current_star)) < cfg.stop_grad_norm) {
      log.stopped_by_grad_norm = true;
      break;
    }

    const Matrix b_start = b;    // B_{ik}
    const Matrix a_frozen = a;   // A_{ik}, held fixed through stage 1
    std::vector<Matrix> stage1(cfg.k, b);
    for (std::size_t j = 0; j < cfg.k; ++j) {
      b = b - cfg.alpha * grad(obj, ThetaPoint(b, a_frozen)).b;
      stage1[j] = b;
    }
    b_star = cfg.lambda * b_start + (1.0 - cfg.lambda) * b;

    for (std::size_t j = 0; j < cfg.k; ++j) {
      a = a - cfg.alpha * grad(obj, ThetaPoint(b_star, a)).a;
      const std::size_t q = outer * cfg.k + j + 1;
      log.steps.emplace_back(stage1[j], a);
      if (!is_finite(log.steps.back())) {
        log.outer_iters_run = outer + 1;
        throw GdDivergenceError(q, std::move(log));
      }
      flag_domain(stage1[j], a, q);
    }
    a_star = a;
    log.outer_iters_run = outer + 1;
  }

  log.star = ThetaPoint(b_star, a_star);
  return log;
}

/// Continuous affine interpolation through the logged iterates. At grid
/// times t = q * alpha it returns (B_q, A_q) exactly; between grid points
/// it is affine with the slope of the discrete update taken at step q,
/// using the stage-frozen arguments indexed by h(t) = q - (q mod k).
inline ThetaPoint interpolate_affine(const IterateLog& log, double t,
                                     const Objective& obj,
                                     const GdConfig& cfg) {
  if (log.steps.empty()) throw UsageError("empty iterate log");
  if (cfg.lambda != log.lambda || cfg.k != log.k || cfg.alpha != log.alpha) {
    throw UsageError("config does not match the scheme that produced the log");
  }
  const std::size_t last = log.last_step_index();
  const double alpha = log.alpha;
  if (t < 0.0 || t > alpha * static_cast<double>(last)) {
    throw RangeError("interpolation time " + std::to_string(t) +
                     " beyond logged horizon " +
                     std::to_string(alpha * static_cast<double>(last)));
  }

  std::size_t q = static_cast<std::size_t>(t / alpha);
  if (q > last) q = last;
  // Guard floating-point rounding of t/alpha in both directions.
  while (q > 0 && static_cast<double>(q) * alpha > t) --q;
  while (q < last && static_cast<double>(q + 1) * alpha <= t) ++q;

  const double t_q = static_cast<double>(q) * alpha;
  if (t == t_q) return log.steps[q];

  const std::size_t h = q - (q % log.k);
  const Matrix& b_q = log.steps[q].b;
  const Matrix& a_q = log.steps[q].a;
  const Matrix& a_h = log.steps[h].a;
  const Matrix grad_b = grad(obj, ThetaPoint(b_q, a_h)).b;
  const Matrix b_mix =
      log.lambda * log.steps[h].b + (1.0 - log.lambda) * log.steps[h + log.k].b;
  const Matrix grad_a = grad(obj, ThetaPoint(b_mix, a_q)).a;

  const double dt = t - t_q;
  return ThetaPoint(b_q - dt * grad_b, a_q - dt * grad_a);
}

/// Plain full-rank gradient descent W_{q+1} = W_q - alpha grad f(W_q),
/// with the whole trajectory recorded.
inline std::vector<Matrix> run_full_rank_gd(const Objective& obj,
                                            const Matrix& w_init, double alpha,
                                            std::size_t iters) {
  if (obj.kind() != ObjectiveKind::TraceSquaredFullRank) {
    throw UsageError("run_full_rank_gd requires the full-rank kind");
  }
  if (!(alpha > 0.0)) throw ParameterError("alpha must be positive");
  std::vector<Matrix> trajectory;
  trajectory.reserve(iters + 1);
  trajectory.push_back(w_init);
  Matrix w = w_init;
  for (std::size_t q = 0; q < iters; ++q) {
    w = w - alpha * grad_full(obj, w);
    if (!is_finite(w)) {
      throw DivergenceError("full-rank GD diverged at step " + std::to_string(q + 1),
                            q + 1);
    }
    trajectory.push_back(w);
  }
  return trajectory;
}

}  // namespace loraflow
