// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "loraflow/objectives.hpp"

namespace loraflow {

/// Fixed-step RK4 settings. Deterministic sample grids (every
/// sample_stride-th step, plus the final step) keep trajectories directly
/// comparable across runs and against closed forms.
struct FlowConfig {
  double step_h = 1e-4;
  double horizon_T = 10.0;
  std::size_t sample_stride = 1;
};

template <typename State>
struct Trajectory {
  std::vector<double> times;
  std::vector<State> states;
};

using ThetaTrajectory = Trajectory<ThetaPoint>;
using MatrixTrajectory = Trajectory<Matrix>;

inline double state_norm(const ThetaPoint& s) { return theta_norm(s); }
inline double state_norm(const Matrix& s) { return frobenius_norm(s); }

namespace detail {

inline void validate_flow_config(const FlowConfig& cfg) {
  if (!(cfg.step_h > 0.0)) throw ParameterError("step_h must be positive");
  if (!(cfg.horizon_T > 0.0)) throw ParameterError("horizon_T must be positive");
  if (cfg.sample_stride == 0) throw ParameterError("sample_stride must be >= 1");
  const double steps = cfg.horizon_T / cfg.step_h;
  if (!(steps < 9.0e15)) {
    throw ParameterError("horizon_T / step_h does not fit the step counter");
  }
}

// Classical RK4 from state0 over round(T/h) steps of size h.
template <typename State, typename Rhs>
Trajectory<State> integrate_rk4(const State& state0, const Rhs& rhs,
                                const FlowConfig& cfg) {
  validate_flow_config(cfg);
  const std::size_t n_steps =
      static_cast<std::size_t>(std::llround(cfg.horizon_T / cfg.step_h));
  const double h = cfg.step_h;

  Trajectory<State> out;
  out.times.reserve(n_steps / cfg.sample_stride + 2);
  out.states.reserve(n_steps / cfg.sample_stride + 2);
  State state = state0;
  out.times.push_back(0.0);
  out.states.push_back(state);

  for (std::size_t step = 1; step <= n_steps; ++step) {
    const State k1 = rhs(state);
    const State k2 = rhs(state + (0.5 * h) * k1);
    const State k3 = rhs(state + (0.5 * h) * k2);
    const State k4 = rhs(state + h * k3);
    state = state + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!is_finite(state)) {
      throw DivergenceError("flow diverged; last finite time t=" +
                                std::to_string(static_cast<double>(step - 1) * h),
                            step - 1);
    }
    if (step % cfg.sample_stride == 0 || step == n_steps) {
      out.times.push_back(static_cast<double>(step) * h);
      out.states.push_back(state);
    }
  }
  return out;
}

}  // namespace detail

/// RK4 integration of the coupled low-rank flow dtheta/dt = -grad(theta).
inline ThetaTrajectory integrate_lora_flow(const Objective& obj,
                                           const ThetaPoint& theta0,
                                           const FlowConfig& cfg) {
  if (!is_low_rank_kind(obj.kind())) {
    throw UsageError("integrate_lora_flow requires a low-rank objective");
  }
  detail::check_theta_dims(obj, theta0);
  const auto rhs = [&obj](const ThetaPoint& theta) {
    return -1.0 * grad(obj, theta);
  };
  return detail::integrate_rk4(theta0, rhs, cfg);
}

/// RK4 integration of the full-rank flow dU/dt = Tr(W0 - U) I.
inline MatrixTrajectory integrate_full_rank_flow(const Objective& obj,
                                                 const Matrix& w_init,
                                                 const FlowConfig& cfg) {
  if (obj.kind() != ObjectiveKind::TraceSquaredFullRank) {
    throw UsageError("integrate_full_rank_flow requires the full-rank kind");
  }
  const auto rhs = [&obj](const Matrix& u) { return -1.0 * grad_full(obj, u); };
  return detail::integrate_rk4(w_init, rhs, cfg);
}

/// Max over shared sample times of the state-space norm of the difference.
/// Both trajectories must carry the same time grid.
template <typename State>
double sup_deviation(const Trajectory<State>& a, const Trajectory<State>& b) {
  if (a.times.size() != b.times.size()) {
    throw UsageError("sup_deviation requires identical time grids");
  }
  double sup = 0.0;
  for (std::size_t i = 0; i < a.times.size(); ++i) {
    if (a.times[i] != b.times[i]) {
      throw UsageError("sup_deviation requires identical time grids");
    }
    sup = std::max(sup, state_norm(a.states[i] - b.states[i]));
  }
  return sup;
}

/// Trajectory built by evaluating a closed-form (or interpolated) state
/// on an existing trajectory's time grid.
template <typename State, typename Eval>
Trajectory<State> evaluate_on_grid(const std::vector<double>& times,
                                   const Eval& eval) {
  Trajectory<State> out;
  out.times = times;
  out.states.reserve(times.size());
  for (double t : times) out.states.push_back(eval(t));
  return out;
}

}  // namespace loraflow
