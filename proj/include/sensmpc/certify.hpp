#pragma once

/**
 * @file
 * @brief A-posteriori performance and practical-stability certificates from closed-loop records.
 *
 * The minimal forward-invariant residual set is replaced by an empirical ball around the
 * equilibrium, and the lower value bound by the smallest recorded value up to the entry step.
 */

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "errors.hpp"
#include "mpc.hpp"
#include "ocp.hpp"
#include "sensitivity.hpp"

namespace sensmpc {

/// Euclidean ball around the equilibrium state.
struct RegionSpec
{
  Vec center;
  double radius = 0.0;

  bool contains(const Vec & x) const { return (x - center).norm() <= radius; }
};

struct RegionEstimate
{
  RegionSpec region;
  double sigma = 0.0;
  int entry_step = 0;
};

struct PerformanceReport
{
  double alpha = 0.0;
  double epsilon = 0.0;
  double sigma = 0.0;
  double modified_cost = 0.0;
  double bound_lhs = 0.0;
  double bound_rhs = 0.0;
  bool bound_satisfied = false;
  std::optional<int> entry_step;
  int post_entry_excursions = 0;

  double slack() const { return bound_rhs - bound_lhs; }
};

struct StabilityDiagnostics
{
  std::optional<int> entry_step;
  /// Transitions from inside to outside the region after the first entry.
  int exits_after_entry = 0;
  int outside_steps = 0;
  /// Steps outside the region where the next recorded value exceeded the current one by more than the tolerance.
  int decrease_violations = 0;
  double max_increase_outside = 0.0;
  /// Outside steps whose realized decrease fell short of alpha * epsilon; only evaluated when both are given.
  std::optional<int> strengthened_decrease_shortfalls;

  bool forward_invariant() const { return entry_step.has_value() && exits_after_entry == 0; }
  bool practically_stable() const { return forward_invariant() && decrease_violations == 0; }
};

inline constexpr double kNegligibleStageCost = 1e-12;
inline constexpr double kBoundTolerance = 1e-9;
inline constexpr double kDecreaseTolerance = 1e-9;
inline constexpr double kRegionMargin = 0.1;

/// min over n of (V(n) - V(n+1)) / l(n), skipping steps with l(n) < 1e-12; needs values.size() > stage_costs.size().
inline double estimate_alpha(const std::vector<double> & values, const std::vector<double> & stage_costs)
{
  if (values.size() < stage_costs.size() + 1) { throw ContractError("estimate_alpha: need a successor value for every stage cost"); }
  double alpha = std::numeric_limits<double>::infinity();
  bool any = false;
  for (std::size_t n = 0; n < stage_costs.size(); ++n) {
    if (!(stage_costs[n] >= kNegligibleStageCost)) { continue; }
    if (!std::isfinite(values[n]) || !std::isfinite(values[n + 1])) { throw ContractError("estimate_alpha: non-finite value"); }
    alpha = std::min(alpha, (values[n] - values[n + 1]) / stage_costs[n]);
    any = true;
  }
  if (!any) { throw AlphaUndefined("estimate_alpha: every stage cost is negligible"); }
  return alpha;
}

/// Relaxed Lyapunov estimate along an undisturbed closed-loop record with recorded values.
inline double estimate_alpha(const ClosedLoopRecord & record)
{
  if (record.steps.size() < 2) { throw AlphaUndefined("estimate_alpha: need at least two recorded steps"); }
  std::vector<double> values, costs;
  for (const auto & s : record.steps) { values.push_back(s.value); }
  for (std::size_t n = 0; n + 1 < record.steps.size(); ++n) { costs.push_back(record.steps[n].stage_cost); }
  return estimate_alpha(values, costs);
}

/**
 * @brief Residual cost level eps for the performance bound.
 *
 * Default: L_l (dx + dw) + (2 L_J dx + 3 L_J dw) / alpha.
 * With @p relaxed_epsilon: ((L_l + 2 L_J)(dx + dw) + relaxed_epsilon) / alpha.
 */
inline double compute_epsilon(const LipschitzEstimates & L, double delta_x, double delta_w, double alpha, std::optional<double> relaxed_epsilon = std::nullopt)
{
  if (!(alpha > 0.0) || alpha > 1.0) { throw ContractError("compute_epsilon: alpha must lie in (0, 1]"); }
  if (!(delta_x >= 0.0) || !(delta_w >= 0.0) || !(L.L_ell >= 0.0) || !(L.L_J >= 0.0)) {
    throw ContractError("compute_epsilon: deviations and Lipschitz constants must be nonnegative");
  }
  if (relaxed_epsilon) {
    if (!(*relaxed_epsilon >= 0.0)) { throw ContractError("compute_epsilon: relaxed epsilon must be nonnegative"); }
    return ((L.L_ell + 2.0 * L.L_J) * (delta_w + delta_x) + *relaxed_epsilon) / alpha;
  }
  return L.L_ell * (delta_x + delta_w) + (2.0 * L.L_J * delta_x + 3.0 * L.L_J * delta_w) / alpha;
}

inline double modified_stage_cost(double ell_value, double epsilon, bool inside_region)
{
  if (inside_region) { return 0.0; }
  return std::max(ell_value - epsilon, 0.0);
}

/**
 * @brief Empirical residual ball and lower value level from a settled record.
 *
 * Radius: 1.1 times the largest measured distance to the equilibrium over the trailing half.
 * Entry step n0: first step inside. sigma: smallest recorded value over steps 1..n0+1.
 */
inline RegionEstimate estimate_region_and_sigma(const ClosedLoopRecord & record)
{
  const auto & st = record.steps;
  if (st.size() < 2) { throw RegionUndefined("estimate_region_and_sigma: record too short"); }
  const Vec & center = record.equilibrium_state;
  const std::size_t half = st.size() / 2;

  double lead_max = -std::numeric_limits<double>::infinity();
  double trail_max = -std::numeric_limits<double>::infinity();
  double radius = 0.0;
  for (std::size_t n = 0; n < st.size(); ++n) {
    if (!std::isfinite(st[n].value)) { throw RegionUndefined("estimate_region_and_sigma: missing recorded values"); }
    if (n < half) {
      lead_max = std::max(lead_max, st[n].value);
    } else {
      trail_max = std::max(trail_max, st[n].value);
      radius = std::max(radius, (st[n].measured_state - center).norm());
    }
  }
  if (trail_max > lead_max + kDecreaseTolerance) { throw RegionUndefined("estimate_region_and_sigma: values grow over the trailing half"); }

  RegionEstimate out;
  out.region.center = center;
  out.region.radius = std::max(radius * (1.0 + kRegionMargin), 1e-12);
  out.entry_step = static_cast<int>(st.size()) - 1;
  for (std::size_t n = 0; n < st.size(); ++n) {
    if (out.region.contains(st[n].measured_state)) {
      out.entry_step = static_cast<int>(n);
      break;
    }
  }
  const std::size_t last = std::min(st.size() - 1, static_cast<std::size_t>(out.entry_step) + 1);
  out.sigma = std::numeric_limits<double>::infinity();
  for (std::size_t n = 1; n <= last; ++n) { out.sigma = std::min(out.sigma, st[n].value); }
  out.sigma = std::max(out.sigma, 0.0);
  return out;
}

/// Accumulates the modified stage costs along the record and checks alpha * sum <= V(0) - sigma + 1e-9.
inline PerformanceReport check_performance_bound(const ClosedLoopRecord & record, double alpha, double epsilon, const RegionSpec & region, double sigma)
{
  if (record.steps.empty()) { throw ContractError("check_performance_bound: empty record"); }
  if (!std::isfinite(record.steps.front().value)) { throw ContractError("check_performance_bound: initial value not recorded"); }
  PerformanceReport r;
  r.alpha = alpha;
  r.epsilon = epsilon;
  r.sigma = sigma;
  bool was_inside = false;
  for (std::size_t n = 0; n < record.steps.size(); ++n) {
    const auto & s = record.steps[n];
    const bool inside = region.contains(s.measured_state);
    r.modified_cost += modified_stage_cost(s.stage_cost, epsilon, inside);
    if (inside && !r.entry_step) { r.entry_step = static_cast<int>(n); }
    if (r.entry_step && was_inside && !inside) { ++r.post_entry_excursions; }
    was_inside = inside;
  }
  r.bound_lhs = alpha * r.modified_cost;
  r.bound_rhs = record.steps.front().value - sigma;
  r.bound_satisfied = r.bound_lhs <= r.bound_rhs + kBoundTolerance;
  return r;
}

/// Forward invariance of the region after entry and value decrease outside it.
inline StabilityDiagnostics check_practical_stability(
  const ClosedLoopRecord & record, const RegionSpec & region, std::optional<double> alpha = std::nullopt, std::optional<double> epsilon = std::nullopt)
{
  StabilityDiagnostics d;
  const auto & st = record.steps;
  bool was_inside = false;
  if (alpha && epsilon) { d.strengthened_decrease_shortfalls = 0; }
  for (std::size_t n = 0; n < st.size(); ++n) {
    const bool inside = region.contains(st[n].measured_state);
    if (inside && !d.entry_step) { d.entry_step = static_cast<int>(n); }
    if (d.entry_step && was_inside && !inside) { ++d.exits_after_entry; }
    was_inside = inside;
    if (inside) { continue; }
    ++d.outside_steps;
    if (n + 1 >= st.size()) { continue; }
    const double increase = st[n + 1].value - st[n].value;
    if (increase > kDecreaseTolerance) {
      ++d.decrease_violations;
      d.max_increase_outside = std::max(d.max_increase_outside, increase);
    }
    if (d.strengthened_decrease_shortfalls && -increase < *alpha * *epsilon) { ++*d.strengthened_decrease_shortfalls; }
  }
  return d;
}

}  // namespace sensmpc
