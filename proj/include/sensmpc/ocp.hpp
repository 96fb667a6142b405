#pragma once

/**
 * @file
 * @brief Parametric sampled-data control systems, zero-order-hold discretization and rollouts.
 *
 * A ParametricSystem describes a continuous-time plant
 * \f$ \dot x = F(x, u, d(t)) \f$ with stage-cost integrand \f$ g(x, u, d(t)) \ge 0 \f$.
 * Controls are held constant over a sampling period T; the discrete map
 * \f$ x^+ = f(x, u, w) \f$ and the stage cost \f$ \ell(x, u, w) = \int_0^T g\,dt \f$ are obtained
 * together by RK4 on the state augmented with a cost accumulator.
 */

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "errors.hpp"
#include "rk4.hpp"

namespace sensmpc {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Box constraints on controls, with an optional state box.
struct Bounds
{
  Vec control_lower;
  Vec control_upper;
  std::optional<Vec> state_lower;
  std::optional<Vec> state_upper;

  Eigen::Index control_dim() const { return control_lower.size(); }

  /// Throws ContractError unless lower < upper componentwise.
  void validate() const
  {
    if (control_lower.size() != control_upper.size()) { throw ContractError("bounds: dimension mismatch"); }
    for (Eigen::Index i = 0; i < control_lower.size(); ++i) {
      if (!(control_lower[i] < control_upper[i])) {
        throw ContractError("bounds: control lower bound must be strictly below upper bound");
      }
    }
    if (state_lower.has_value() != state_upper.has_value()) {
      throw ContractError("bounds: state box needs both sides");
    }
    if (state_lower) {
      if (state_lower->size() != state_upper->size()) { throw ContractError("bounds: state box dimension mismatch"); }
      for (Eigen::Index i = 0; i < state_lower->size(); ++i) {
        if (!((*state_lower)[i] < (*state_upper)[i])) {
          throw ContractError("bounds: state lower bound must be strictly below upper bound");
        }
      }
    }
  }

  Vec clip(const Vec & u) const { return u.cwiseMax(control_lower).cwiseMin(control_upper); }
};

struct EquilibriumPoint
{
  Vec x;
  Vec u;
  Vec w;
};

/// How a sample sequence is turned into a disturbance signal inside one sampling interval.
enum class DisturbanceHold {
  /// w(k) is held constant on [kT, (k+1)T).
  zero_order,
  /// Samples are laid out as [values; rates]; the signal is the cubic Hermite interpolant between
  /// consecutive samples, so a horizon of N intervals needs N + 1 samples.
  hermite,
};

/// Nominal or measured disturbance samples w(0), w(1), ... for one horizon.
struct DisturbanceSequence
{
  std::vector<Vec> samples;
  DisturbanceHold hold = DisturbanceHold::zero_order;

  std::size_t size() const { return samples.size(); }
  Eigen::Index dim() const { return samples.empty() ? 0 : samples.front().size(); }

  static std::size_t required_length(DisturbanceHold hold, int horizon)
  {
    return hold == DisturbanceHold::hermite ? static_cast<std::size_t>(horizon) + 1 : static_cast<std::size_t>(horizon);
  }

  Vec stacked() const
  {
    Vec out(static_cast<Eigen::Index>(samples.size()) * dim());
    for (std::size_t k = 0; k < samples.size(); ++k) { out.segment(static_cast<Eigen::Index>(k) * dim(), dim()) = samples[k]; }
    return out;
  }

  /// Inverse of stacked(), keeping the hold mode and sample count of @p layout.
  static DisturbanceSequence from_stacked(const Vec & v, const DisturbanceSequence & layout)
  {
    DisturbanceSequence out{layout.samples, layout.hold};
    const Eigen::Index p = layout.dim();
    for (std::size_t k = 0; k < out.samples.size(); ++k) { out.samples[k] = v.segment(static_cast<Eigen::Index>(k) * p, p); }
    return out;
  }
};

/// The disturbance signal on one sampling interval, evaluated at local time tau in [0, T].
class DisturbanceSegment
{
public:
  DisturbanceSegment(const DisturbanceSequence & seq, std::size_t k, double period)
      : hold_(seq.hold), period_(period), begin_(&seq.samples.at(k))
  {
    if (hold_ == DisturbanceHold::hermite) {
      end_ = &seq.samples.at(k + 1);
      if (begin_->size() % 2 != 0) { throw ContractError("hermite disturbance samples need [values; rates] layout"); }
    }
  }

  void operator()(double tau, Vec & out) const
  {
    if (hold_ == DisturbanceHold::zero_order) {
      out = *begin_;
      return;
    }
    const Eigen::Index q = begin_->size() / 2;
    const double T = period_;
    const double s = tau / T;
    const double s2 = s * s, s3 = s2 * s;
    const double h00 = 2 * s3 - 3 * s2 + 1, h10 = s3 - 2 * s2 + s, h01 = -2 * s3 + 3 * s2, h11 = s3 - s2;
    const double d00 = (6 * s2 - 6 * s) / T, d10 = 3 * s2 - 4 * s + 1, d01 = (-6 * s2 + 6 * s) / T, d11 = 3 * s2 - 2 * s;
    const auto & a = *begin_;
    const auto & b = *end_;
    out.resize(2 * q);
    out.head(q) = h00 * a.head(q) + (h10 * T) * a.tail(q) + h01 * b.head(q) + (h11 * T) * b.tail(q);
    out.tail(q) = d00 * a.head(q) + d10 * a.tail(q) + d01 * b.head(q) + d11 * b.tail(q);
  }

private:
  DisturbanceHold hold_;
  double period_;
  const Vec * begin_;
  const Vec * end_ = nullptr;
};

/**
 * @brief A sampled-data control problem: dynamics, stage cost, equilibrium and constraints.
 *
 * `derivative(x, u, d, dxdt)` and `stage_integrand(x, u, d)` receive the disturbance value d at
 * the current time (for Hermite holds, the [values; rates] vector).
 */
struct ParametricSystem
{
  using Derivative = std::function<void(
    Eigen::Ref<const Vec> x, Eigen::Ref<const Vec> u, Eigen::Ref<const Vec> d, Eigen::Ref<Vec> dxdt)>;
  using StageIntegrand =
    std::function<double(Eigen::Ref<const Vec> x, Eigen::Ref<const Vec> u, Eigen::Ref<const Vec> d)>;
  using FusedEvaluation = std::function<double(
    Eigen::Ref<const Vec> x, Eigen::Ref<const Vec> u, Eigen::Ref<const Vec> d, Eigen::Ref<Vec> dxdt)>;

  std::string name;
  Eigen::Index state_dim = 0;
  Eigen::Index control_dim = 0;
  Eigen::Index disturbance_dim = 0;
  DisturbanceHold hold = DisturbanceHold::zero_order;
  double sampling_period = 0.1;
  int substeps_per_period = 100;
  Derivative derivative;
  StageIntegrand stage_integrand;
  /// Optional: writes the derivative and returns the integrand in one call; must agree with the pair above.
  FusedEvaluation fused;
  /// Optional scalar output logged by the closed loop (e.g. chassis jerk); may be empty.
  StageIntegrand monitor;
  EquilibriumPoint equilibrium;
  Bounds bounds;
};

struct StepResult
{
  Vec state;
  double stage_cost;
};

struct Trajectory
{
  std::vector<Vec> states;
  std::vector<Vec> controls;
  std::vector<double> stage_costs;
};

namespace detail {

/// Reusable buffers for repeated discretization steps.
struct StepWorkspace
{
  Rk4Workspace rk;
  Vec augmented;
  Vec d;
};

template<typename Signal>
double step_in_place(const ParametricSystem & sys, Vec & x, const Vec & u, Signal && signal, StepWorkspace & ws)
{
  const Eigen::Index n = sys.state_dim;
  ws.augmented.resize(n + 1);
  ws.augmented.head(n) = x;
  ws.augmented[n] = 0.0;
  auto flow = [&](double t, const Vec & y, Vec & dy) {
    signal(t, ws.d);
    if (sys.fused) {
      dy[n] = sys.fused(y.head(n), u, ws.d, dy.head(n));
    } else {
      sys.derivative(y.head(n), u, ws.d, dy.head(n));
      dy[n] = sys.stage_integrand(y.head(n), u, ws.d);
    }
  };
  const double h = sys.sampling_period / sys.substeps_per_period;
  for (int i = 0; i < sys.substeps_per_period; ++i) {
    rk4_step(flow, i * h, h, ws.augmented, ws.rk);
    if (!ws.augmented.allFinite()) { throw IntegrationDiverged("integration diverged in " + sys.name); }
  }
  x = ws.augmented.head(n);
  return ws.augmented[n];
}

}  // namespace detail

/**
 * @brief Advances one sampling period under zero-order-hold control.
 *
 * @p w_segment is any callable `void(double tau, Vec & d)` giving the disturbance on [0, T].
 * Returns the successor state and the stage cost integrated alongside the state.
 */
template<typename Signal>
StepResult discretize_step(const ParametricSystem & sys, const Vec & x, const Vec & u, Signal && w_segment)
{
  if (x.size() != sys.state_dim || u.size() != sys.control_dim) { throw ContractError("discretize_step: dimension mismatch"); }
  detail::StepWorkspace ws;
  StepResult out{x, 0.0};
  out.stage_cost = detail::step_in_place(sys, out.state, u, w_segment, ws);
  return out;
}

inline void check_sequence(const ParametricSystem & sys, std::size_t controls, const DisturbanceSequence & w)
{
  if (w.hold != sys.hold) { throw ContractError("disturbance hold mode does not match the system"); }
  if (w.size() < DisturbanceSequence::required_length(sys.hold, static_cast<int>(controls))) {
    throw ContractError("disturbance sequence shorter than the horizon");
  }
  for (const auto & s : w.samples) {
    if (s.size() != sys.disturbance_dim) { throw ContractError("disturbance sample has wrong dimension"); }
  }
}

/// Chains discretize_step over the control sequence, recording states and stage costs.
inline Trajectory rollout(
  const ParametricSystem & sys, const Vec & x0, const std::vector<Vec> & controls, const DisturbanceSequence & w)
{
  if (x0.size() != sys.state_dim) { throw ContractError("rollout: initial state has wrong dimension"); }
  Trajectory traj;
  traj.states.reserve(controls.size() + 1);
  traj.states.push_back(x0);
  traj.controls = controls;
  if (controls.empty()) { return traj; }
  check_sequence(sys, controls.size(), w);
  detail::StepWorkspace ws;
  Vec x = x0;
  for (std::size_t k = 0; k < controls.size(); ++k) {
    if (controls[k].size() != sys.control_dim) { throw ContractError("rollout: control has wrong dimension"); }
    DisturbanceSegment seg(w, k, sys.sampling_period);
    traj.stage_costs.push_back(detail::step_in_place(sys, x, controls[k], seg, ws));
    traj.states.push_back(x);
  }
  return traj;
}

/// Splits a stacked control vector U = (u(0), ..., u(N-1)) into its per-step controls.
inline std::vector<Vec> unstack_controls(const Vec & U, Eigen::Index m)
{
  if (m <= 0 || U.size() % m != 0) { throw ContractError("stacked controls do not match the control dimension"); }
  std::vector<Vec> out;
  for (Eigen::Index k = 0; k < U.size() / m; ++k) { out.emplace_back(U.segment(k * m, m)); }
  return out;
}

inline Vec stack_controls(const std::vector<Vec> & controls)
{
  const Eigen::Index m = controls.empty() ? 0 : controls.front().size();
  Vec U(static_cast<Eigen::Index>(controls.size()) * m);
  for (std::size_t k = 0; k < controls.size(); ++k) { U.segment(static_cast<Eigen::Index>(k) * m, m) = controls[k]; }
  return U;
}

inline Trajectory rollout(const ParametricSystem & sys, const Vec & x0, const Vec & U, const DisturbanceSequence & w)
{
  return rollout(sys, x0, unstack_controls(U, sys.control_dim), w);
}

/// Finite-horizon cost: the sum of the N recorded stage costs (no terminal term).
inline double evaluate_cost(const Trajectory & traj)
{
  double total = 0.0;
  for (double c : traj.stage_costs) { total += c; }
  return total;
}

/// Cost of a stacked control sequence without materializing the trajectory.
inline double horizon_cost(const ParametricSystem & sys, const Vec & x0, const Vec & U, const DisturbanceSequence & w)
{
  const Eigen::Index m = sys.control_dim;
  const auto N = static_cast<std::size_t>(U.size() / m);
  check_sequence(sys, N, w);
  detail::StepWorkspace ws;
  Vec x = x0;
  Vec u(m);
  double total = 0.0;
  for (std::size_t k = 0; k < N; ++k) {
    u = U.segment(static_cast<Eigen::Index>(k) * m, m);
    DisturbanceSegment seg(w, k, sys.sampling_period);
    total += detail::step_in_place(sys, x, u, seg, ws);
  }
  return total;
}

/**
 * @brief J_N around a fixed base point (x0, U, w) that re-simulates only from the first interval
 * a query differs from the base in.
 *
 * Results are bitwise identical to horizon_cost. Not safe for concurrent use (shared workspace).
 */
class CachedHorizonCost
{
public:
  CachedHorizonCost(const ParametricSystem & sys, Vec x0, Vec U, DisturbanceSequence w)
      : sys_(&sys), x0_(std::move(x0)), U_(std::move(U)), w_(std::move(w))
  {
    const Eigen::Index m = sys.control_dim;
    if (m <= 0 || U_.size() % m != 0) { throw ContractError("cached cost: controls do not match the control dimension"); }
    N_ = static_cast<std::size_t>(U_.size() / m);
    check_sequence(sys, N_, w_);
    states_.reserve(N_ + 1);
    cumulative_.reserve(N_ + 1);
    Vec x = x0_;
    double total = 0.0;
    states_.push_back(x);
    cumulative_.push_back(total);
    for (std::size_t k = 0; k < N_; ++k) {
      u_ = U_.segment(static_cast<Eigen::Index>(k) * m, m);
      total += detail::step_in_place(sys, x, u_, DisturbanceSegment(w_, k, sys.sampling_period), ws_);
      states_.push_back(x);
      cumulative_.push_back(total);
    }
  }

  double base_value() const { return cumulative_.back(); }

  double operator()(const Vec & U) const { return evaluate(U, first_control_change(U), nullptr, w_); }

  double operator()(const Vec & U, const Vec & x0, const DisturbanceSequence & w) const
  {
    std::size_t k = std::min(first_control_change(U), first_disturbance_change(w));
    const bool x0_changed = (x0.array() != x0_.array()).any();
    if (x0_changed) { k = 0; }
    return evaluate(U, k, x0_changed ? &x0 : nullptr, w);
  }

private:
  std::size_t first_control_change(const Vec & U) const
  {
    if (U.size() != U_.size()) { throw ContractError("cached cost: control dimension mismatch"); }
    const Eigen::Index m = sys_->control_dim;
    for (Eigen::Index i = 0; i < U.size(); ++i) {
      if (U[i] != U_[i]) { return static_cast<std::size_t>(i / m); }
    }
    return N_;
  }

  std::size_t first_disturbance_change(const DisturbanceSequence & w) const
  {
    if (w.size() != w_.size() || w.dim() != w_.dim()) { throw ContractError("cached cost: disturbance layout mismatch"); }
    for (std::size_t s = 0; s < w.size(); ++s) {
      if ((w.samples[s].array() != w_.samples[s].array()).any()) {
        // A Hermite sample is the right end of the previous interval.
        return w_.hold == DisturbanceHold::hermite && s > 0 ? s - 1 : s;
      }
    }
    return N_;
  }

  double evaluate(const Vec & U, std::size_t k, const Vec * x0, const DisturbanceSequence & w) const
  {
    if (k >= N_) { return cumulative_.back(); }
    const Eigen::Index m = sys_->control_dim;
    x_ = x0 ? *x0 : states_[k];
    double total = cumulative_[k];
    for (std::size_t j = k; j < N_; ++j) {
      u_ = U.segment(static_cast<Eigen::Index>(j) * m, m);
      total += detail::step_in_place(*sys_, x_, u_, DisturbanceSegment(w, j, sys_->sampling_period), ws_);
    }
    return total;
  }

  const ParametricSystem * sys_;
  Vec x0_, U_;
  DisturbanceSequence w_;
  std::size_t N_ = 0;
  std::vector<Vec> states_;
  std::vector<double> cumulative_;
  mutable detail::StepWorkspace ws_;
  mutable Vec x_, u_;
};

struct Violation
{
  enum class Kind { control, state } kind;
  std::size_t index;
  Eigen::Index component;
  double value;
};

struct AdmissibilityReport
{
  bool admissible = true;
  std::vector<Violation> violations;
};

/// Closed-set membership test of all controls in the control box and all states in the state box.
inline AdmissibilityReport admissible_check(const ParametricSystem & sys, const Trajectory & traj)
{
  AdmissibilityReport report;
  const auto & b = sys.bounds;
  for (std::size_t k = 0; k < traj.controls.size(); ++k) {
    for (Eigen::Index i = 0; i < traj.controls[k].size(); ++i) {
      const double v = traj.controls[k][i];
      if (v < b.control_lower[i] || v > b.control_upper[i]) {
        report.violations.push_back({Violation::Kind::control, k, i, v});
      }
    }
  }
  if (b.state_lower) {
    for (std::size_t k = 0; k < traj.states.size(); ++k) {
      for (Eigen::Index i = 0; i < traj.states[k].size(); ++i) {
        const double v = traj.states[k][i];
        if (v < (*b.state_lower)[i] || v > (*b.state_upper)[i]) {
          report.violations.push_back({Violation::Kind::state, k, i, v});
        }
      }
    }
  }
  report.admissible = report.violations.empty();
  return report;
}

/**
 * @brief Source of the exogenous disturbance for a closed-loop run.
 *
 * Separates the truth seen by the plant from what the controller measures and forecasts.
 */
class DisturbanceChannel
{
public:
  virtual ~DisturbanceChannel() = default;

  /// Disturbance value d(t) driving the true plant (same layout the system derivative expects).
  virtual void truth(double t, Vec & d) const = 0;
  /// True disturbance sample at time t, in the layout returned by observe().
  virtual Vec true_sample(double t) const = 0;
  /// Takes all measurements up to time t and returns the noisy sample at t.
  virtual Vec observe(double t, double noise_amplitude, std::mt19937_64 & rng) = 0;
  /// Forecast at times t_start + k*period, k = 0..count-1, from the measurements taken so far.
  virtual DisturbanceSequence forecast(double t_start, double period, int count) const = 0;
};

}  // namespace sensmpc
