#pragma once

/**
 * @file
 * @brief Advanced-step MPC closed loop with measured disturbances and control updates.
 *
 * Each iteration n:
 *  1. perturb the plant state by the bounded state disturbance to obtain x̄(n), measure the road and
 *     build the measured preview w̄(n);
 *  2. correct the precomputed sequence u*(., x(n), w(n)) (mode dependent) and apply its first element;
 *  3. simulate the plant from x̄(n) on the true road and predict x(n+1) from x̄(n), the applied
 *     control and w̄(n);
 *  4. solve the OCP at x(n+1) with the preview available at time n for use in the next iteration.
 */

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "errors.hpp"
#include "ocp.hpp"
#include "sensitivity.hpp"
#include "solver.hpp"

namespace sensmpc {

enum class MpcMode {
  /// Apply the precomputed first control without correction.
  nominal,
  /// First-order sensitivity correction of the precomputed sequence.
  sensitivity_update,
  /// Re-solve at the measured state and disturbance.
  full_reopt,
};

inline const char * to_string(MpcMode m)
{
  switch (m) {
    case MpcMode::nominal: return "nominal";
    case MpcMode::sensitivity_update: return "sensitivity_update";
    case MpcMode::full_reopt: return "full_reopt";
  }
  return "?";
}

enum class UpdateStatus { nominal, applied, clipped, regularity_failed, reoptimized };

inline const char * to_string(UpdateStatus s)
{
  switch (s) {
    case UpdateStatus::nominal: return "nominal";
    case UpdateStatus::applied: return "applied";
    case UpdateStatus::clipped: return "clipped";
    case UpdateStatus::regularity_failed: return "regularity_failed";
    case UpdateStatus::reoptimized: return "reoptimized";
  }
  return "?";
}

struct MpcConfig
{
  MpcMode mode = MpcMode::sensitivity_update;
  int horizon = 5;
  int steps = 100;
  /// State disturbance amplitude (uniform per component, added to the plant state at each sampling instant).
  double delta_x = 0.025;
  /// Disturbance measurement noise amplitude (uniform per sample).
  double delta_w = 0.025;
  std::uint64_t rng_seed = 0;
  /// Defaults to the plant equilibrium.
  std::optional<Vec> initial_state;
  /// Also evaluate V_N at the measured state every step (one extra warm-started solve outside full_reopt).
  bool record_values = true;
  SolverOptions solver{};
  SensitivityOptions sensitivity{};

  void validate() const
  {
    if (steps < 1) { throw ContractError("mpc: steps must be at least 1"); }
    if (horizon < 2) { throw ContractError("mpc: horizon must be at least 2"); }
    if (!std::isfinite(delta_x) || !std::isfinite(delta_w) || delta_x < 0 || delta_w < 0) {
      throw ContractError("mpc: noise amplitudes must be finite and nonnegative");
    }
  }
};

struct StepRecord
{
  int step = 0;
  double time = 0.0;
  /// Disturbed state x̄(n) seen by the controller and propagated by the plant.
  Vec measured_state;
  /// Plant state before the state disturbance of step n.
  Vec plant_state;
  /// Nominal x(n) at which the advanced-step solve was made.
  Vec predicted_state;
  Vec measured_disturbance;
  Vec true_disturbance;
  DisturbanceSequence nominal_preview;
  DisturbanceSequence measured_preview;
  Vec nominal_controls;
  Vec applied_sequence;
  Vec applied_control;
  /// l(x̄(n), applied, w̄(n)).
  double stage_cost = 0.0;
  /// Stage cost realized by the true plant on the true road.
  double true_stage_cost = 0.0;
  /// V_N(x̄(n), w̄(n)); NaN when not recorded.
  double value = std::numeric_limits<double>::quiet_NaN();
  /// V_N(x(n), w(n)) of the advanced-step solve.
  double nominal_value = 0.0;
  /// Plant monitor output (chassis jerk for the halfcar) at the start of the interval.
  double monitor = 0.0;
  UpdateStatus status = UpdateStatus::nominal;
  SolverStats solver;
};

struct ClosedLoopRecord
{
  MpcMode mode = MpcMode::nominal;
  double sampling_period = 0.1;
  double delta_x = 0.0;
  double delta_w = 0.0;
  Vec equilibrium_state;
  std::vector<StepRecord> steps;

  int controller_solves = 0;
  int sensitivity_computations = 0;
  int diagnostic_solves = 0;
  int clipped_updates = 0;
  int regularity_failures = 0;
  /// Steps where ‖w̄(n+1) - w̄(n)‖_inf exceeded delta_w.
  int disturbance_rate_violations = 0;

  bool truncated = false;
  std::string diagnostic;

  std::size_t size() const { return steps.size(); }
};

/// Runs the advanced-step closed loop of @p plant driven by @p channel.
inline ClosedLoopRecord run_closed_loop(const std::shared_ptr<const ParametricSystem> & plant, DisturbanceChannel & channel, const MpcConfig & cfg)
{
  cfg.validate();
  if (!plant) { throw ContractError("mpc: missing plant"); }
  const ParametricSystem & sys = *plant;
  const int N = cfg.horizon;
  const Eigen::Index m = sys.control_dim;
  const double T = sys.sampling_period;
  const int len = static_cast<int>(DisturbanceSequence::required_length(sys.hold, N));

  ClosedLoopRecord rec;
  rec.mode = cfg.mode;
  rec.sampling_period = T;
  rec.delta_x = cfg.delta_x;
  rec.delta_w = cfg.delta_w;
  rec.equilibrium_state = sys.equilibrium.x;

  auto make_problem = [&](const Vec & x, const DisturbanceSequence & w) {
    return OcpProblem{plant, x, w, N, sys.bounds};
  };

  std::mt19937_64 rng(cfg.rng_seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);

  Vec x_plant = cfg.initial_state.value_or(sys.equilibrium.x);
  if (x_plant.size() != sys.state_dim) { throw ContractError("mpc: initial state has wrong dimension"); }
  Vec x_pred = x_plant;

  channel.observe(-T, cfg.delta_w, rng);
  DisturbanceSequence w_nom = channel.forecast(0.0, T, len);

  const Vec cold = (0.5 * (sys.bounds.control_lower + sys.bounds.control_upper)).replicate(N, 1);
  OcpSolution sol;
  std::optional<SensitivityMatrices> sens;
  auto advanced_step = [&](const Vec & guess, const Mat * metric) {
    sol = solve_ocp(make_problem(x_pred, w_nom), guess, cfg.solver, metric);
    ++rec.controller_solves;
    sens.reset();
    if (cfg.mode == MpcMode::sensitivity_update) {
      ++rec.sensitivity_computations;
      try {
        sens = compute_sensitivities(make_problem(x_pred, w_nom), sol, cfg.sensitivity);
      } catch (const SensitivityUnavailable &) {
      } catch (const IllConditioned &) {
      } catch (const RegularityIndeterminate &) {
      }
    }
  };

  try {
    advanced_step(cold, nullptr);
  } catch (const Error & e) {
    rec.truncated = true;
    rec.diagnostic = std::string("initial solve failed: ") + e.what();
    return rec;
  }

  std::optional<Vec> prev_raw;
  Vec d_truth;
  for (int n = 0; n < cfg.steps; ++n) {
    const double t = n * T;
    StepRecord step;
    step.step = n;
    step.time = t;
    try {
      // (1) measurements
      Vec x_meas = x_plant;
      for (Eigen::Index i = 0; i < x_meas.size(); ++i) { x_meas[i] += cfg.delta_x * unit(rng); }
      const Vec w_raw = channel.observe(t, cfg.delta_w, rng);
      const DisturbanceSequence w_meas = channel.forecast(t, T, len);
      if (prev_raw && (w_raw - *prev_raw).cwiseAbs().maxCoeff() > cfg.delta_w) { ++rec.disturbance_rate_violations; }
      prev_raw = w_raw;

      // (2) control update
      Vec seq = sol.controls;
      switch (cfg.mode) {
        case MpcMode::nominal: step.status = UpdateStatus::nominal; break;
        case MpcMode::sensitivity_update:
          if (sens) {
            const UpdateResult upd = apply_update(sol, *sens, x_pred, w_nom, x_meas, w_meas, sys.bounds);
            seq = upd.controls;
            step.status = upd.clipped ? UpdateStatus::clipped : UpdateStatus::applied;
            if (upd.clipped) { ++rec.clipped_updates; }
          } else {
            step.status = UpdateStatus::regularity_failed;
            ++rec.regularity_failures;
          }
          break;
        case MpcMode::full_reopt: {
          const OcpSolution re = solve_ocp(make_problem(x_meas, w_meas), sol.controls, cfg.solver, &sol.metric);
          ++rec.controller_solves;
          seq = re.controls;
          step.value = re.value;
          step.status = UpdateStatus::reoptimized;
          break;
        }
      }
      const Vec u = seq.head(m);

      // (3) plant and nominal prediction
      auto truth = [&](double tau, Vec & d) { channel.truth(t + tau, d); };
      if (sys.monitor) {
        channel.truth(t, d_truth);
        step.monitor = sys.monitor(x_meas, u, d_truth);
      }
      const StepResult plant_step = discretize_step(sys, x_meas, u, truth);
      const StepResult pred = discretize_step(sys, x_meas, u, DisturbanceSegment(w_meas, 0, T));

      if (cfg.record_values && cfg.mode != MpcMode::full_reopt) {
        try {
          step.value = solve_ocp(make_problem(x_meas, w_meas), seq, cfg.solver, &sol.metric).value;
        } catch (const MaxIterationsError &) {
        }
        ++rec.diagnostic_solves;
      }

      step.measured_state = x_meas;
      step.plant_state = x_plant;
      step.predicted_state = x_pred;
      step.measured_disturbance = w_raw;
      step.true_disturbance = channel.true_sample(t);
      step.nominal_preview = w_nom;
      step.measured_preview = w_meas;
      step.nominal_controls = sol.controls;
      step.applied_sequence = seq;
      step.applied_control = u;
      step.stage_cost = pred.stage_cost;
      step.true_stage_cost = plant_step.stage_cost;
      step.nominal_value = sol.value;
      step.solver = sol.stats;
      rec.steps.push_back(step);

      x_plant = plant_step.state;
      x_pred = pred.state;

      // (4) advanced-step solve for n + 1
      if (n + 1 < cfg.steps) {
        w_nom = channel.forecast(t + T, T, len);
        const Mat metric = shifted_metric(sol.metric, m);
        advanced_step(shifted_guess(seq, m), &metric);
      }
    } catch (const Error & e) {
      rec.truncated = true;
      rec.diagnostic = "step " + std::to_string(n) + ": " + e.what();
      break;
    }
  }
  return rec;
}

/// Sum of the recorded stage costs l(x̄(n), applied control, w̄(n)).
inline double closed_loop_cost(const ClosedLoopRecord & record)
{
  if (record.steps.empty()) { throw ContractError("closed_loop_cost: empty record"); }
  double total = 0.0;
  for (const auto & s : record.steps) { total += s.stage_cost; }
  return total;
}

}  // namespace sensmpc
