#pragma once

/**
 * @file
 * @brief Halfcar with two semi-active (controllable) suspension dampers.
 *
 * State (x1, x2, x3, x4, v1, v2, v3, v4): front and rear wheel centers, chassis center (m,
 * measured downward), pitch angle (rad) and their velocities. Road input (w1, w2, w1', w2') is the
 * road height and rate under the front and rear wheel. Controls are the two damper coefficients
 * in kN s/m.
 */

#include <Eigen/Core>

#include <array>
#include <cmath>
#include <memory>
#include <numbers>

#include "errors.hpp"
#include "ocp.hpp"

namespace sensmpc::halfcar {

/// Interpretation of the spring and damper constants.
enum class StiffnessUnits {
  /// Springs in N/m, dampers in N s/m.
  si,
  /// The nominal values read as kN/m and kN s/m (all constants scaled by 1000).
  kilo,
};

struct HalfcarParams
{
  double a = 1.0;
  double b = 1.0;
  double m1 = 15.0;
  double m2 = 15.0;
  double m3 = 750.0;
  double I = 500.0;
  double k1 = 2e5;
  double k2 = 2e5;
  double d1 = 2e2;
  double d2 = 2e2;
  double k3 = 1e5;
  double k4 = 1e5;
  double g = 9.81;
  double mu_R = 1.0;
  double mu_A = 1e-6;
  /// Damper bounds in control units (kN s/m).
  double u_lower = 0.2;
  double u_upper = 5.0;
  /// N s/m per control unit.
  double control_scale = 1000.0;
  double vehicle_speed = 10.0;
  StiffnessUnits units = StiffnessUnits::si;

  /// Nominal tire forces.
  double F1() const { return a * g * (m1 + m2 + m3) / (a + b); }
  double F2() const { return b * g * (m1 + m2 + m3) / (a + b); }

  /// Time for the rear wheel to reach the point the front wheel is at.
  double wheelbase_delay() const { return (a + b) / vehicle_speed; }

  /// Constants in N/m and N s/m after applying the unit interpretation.
  HalfcarParams resolved() const
  {
    HalfcarParams p = *this;
    if (units == StiffnessUnits::kilo) {
      for (double * c : {&p.k1, &p.k2, &p.k3, &p.k4, &p.d1, &p.d2}) { *c *= 1000.0; }
      p.units = StiffnessUnits::si;
    }
    return p;
  }

  void validate() const
  {
    for (double v : {a, b, m1, m2, m3, I, k1, k2, k3, k4, d1, d2, g, control_scale, vehicle_speed}) {
      if (!(v > 0.0) || !std::isfinite(v)) { throw ContractError("halfcar: parameters must be positive and finite"); }
    }
    if (!(mu_R >= 0.0) || !(mu_A >= 0.0)) { throw ContractError("halfcar: cost weights must be nonnegative"); }
    if (!(u_lower < u_upper)) { throw ContractError("halfcar: damper bounds must satisfy lower < upper"); }
  }
};

struct Forces
{
  double f1, f2, f3, f4;
};

using State = Eigen::Matrix<double, 8, 1>;
using Road = Eigen::Vector4d;

/// Spring/damper forces; @p u in control units, @p r = (w1, w2, w1', w2'). Constants must be resolved.
template<typename S, typename U, typename R>
Forces forces(const S & s, const U & u, const R & r, const HalfcarParams & p)
{
  const double U1 = p.control_scale * u[0];
  const double U2 = p.control_scale * u[1];
  const double sn = std::sin(s[3]), cs = std::cos(s[3]);
  return {
    p.k1 * (s[0] - r[0]) + p.d1 * (s[4] - r[2]),
    p.k2 * (s[1] - r[1]) + p.d2 * (s[5] - r[3]),
    p.k3 * (s[2] - s[0] - p.b * sn) + U1 * (s[6] - s[4] - p.b * s[7] * cs),
    p.k4 * (s[2] - s[1] + p.a * sn) + U2 * (s[6] - s[5] + p.a * s[7] * cs),
  };
}

/// Accelerations (x1'', x2'', x3'', x4'').
template<typename S>
std::array<double, 4> accelerations(const S & s, const Forces & f, const HalfcarParams & p)
{
  if (!(std::abs(s[3]) < std::numbers::pi / 2)) { throw ModelDomainError("halfcar: pitch angle outside (-pi/2, pi/2)"); }
  return {
    p.g + (f.f3 - f.f1) / p.m1,
    p.g + (f.f4 - f.f2) / p.m2,
    p.g - (f.f3 + f.f4) / p.m3,
    std::cos(s[3]) * (p.b * f.f3 - p.a * f.f4) / p.I,
  };
}

template<typename S, typename U, typename R, typename Out>
void derivative(const S & s, const U & u, const R & r, const HalfcarParams & p, Out && dx)
{
  const Forces f = forces(s, u, r, p);
  const auto acc = accelerations(s, f, p);
  for (int i = 0; i < 4; ++i) {
    dx[i] = s[i + 4];
    dx[i + 4] = acc[static_cast<std::size_t>(i)];
  }
}

inline Eigen::Matrix<double, 8, 1> halfcar_derivative(const State & s, const Eigen::Vector2d & u, const Road & r, const HalfcarParams & p)
{
  Eigen::Matrix<double, 8, 1> dx;
  derivative(s, u, r, p, dx);
  return dx;
}

namespace detail {

template<typename S, typename U>
double jerk_from(const S & s, const U & u, const std::array<double, 4> & acc, const HalfcarParams & p)
{
  const double U1 = p.control_scale * u[0];
  const double U2 = p.control_scale * u[1];
  const double sn = std::sin(s[3]), cs = std::cos(s[3]);
  const double v4 = s[7];
  const double df3 = p.k3 * (s[6] - s[4] - p.b * v4 * cs) + U1 * (acc[2] - acc[0] - p.b * acc[3] * cs + p.b * v4 * v4 * sn);
  const double df4 = p.k4 * (s[6] - s[5] + p.a * v4 * cs) + U2 * (acc[2] - acc[1] + p.a * acc[3] * cs - p.a * v4 * v4 * sn);
  return -(df3 + df4);
}

inline double handling_term(const Forces & f, const HalfcarParams & p)
{
  const double F1 = p.F1(), F2 = p.F2();
  const double t1 = (f.f1 - F1) / F1;
  const double t2 = (f.f2 - F2) / F2;
  return t1 * t1 + t2 * t2;
}

}  // namespace detail

/**
 * @brief Chassis jerk times chassis mass, m3 x3''' = -(f3' + f4'), for constant controls.
 *
 * f3 and f4 do not contain the road, so no road acceleration is needed.
 */
template<typename S, typename U, typename R>
double chassis_jerk(const S & s, const U & u, const R & r, const HalfcarParams & p)
{
  const Forces f = forces(s, u, r, p);
  return detail::jerk_from(s, u, accelerations(s, f, p), p);
}

/// mu_R times the squared normalized tire-force deviations plus mu_A times the squared m3 x3'''.
template<typename S, typename U, typename R>
double stage_cost_integrand(const S & s, const U & u, const R & r, const HalfcarParams & p)
{
  const Forces f = forces(s, u, r, p);
  const double jerk = detail::jerk_from(s, u, accelerations(s, f, p), p);
  return p.mu_R * detail::handling_term(f, p) + p.mu_A * jerk * jerk;
}

/// Writes the state derivative and returns the stage-cost integrand, sharing the force evaluation.
template<typename S, typename U, typename R, typename Out>
double derivative_and_integrand(const S & s, const U & u, const R & r, const HalfcarParams & p, Out && dx)
{
  const Forces f = forces(s, u, r, p);
  const auto acc = accelerations(s, f, p);
  for (int i = 0; i < 4; ++i) {
    dx[i] = s[i + 4];
    dx[i + 4] = acc[static_cast<std::size_t>(i)];
  }
  const double jerk = detail::jerk_from(s, u, acc, p);
  return p.mu_R * detail::handling_term(f, p) + p.mu_A * jerk * jerk;
}

/// Static equilibrium on a flat road; the damper setting is the midpoint of its bounds.
inline EquilibriumPoint equilibrium(const HalfcarParams & params)
{
  const HalfcarParams p = params.resolved();
  const double f3 = p.m3 * p.g * p.a / (p.a + p.b);
  const double f4 = p.m3 * p.g * p.b / (p.a + p.b);
  const double x1 = (p.m1 * p.g + f3) / p.k1;
  const double x2 = (p.m2 * p.g + f4) / p.k2;
  // x3 - b sin(x4) = x1 + f3/k3 and x3 + a sin(x4) = x2 + f4/k4
  const double front = x1 + f3 / p.k3;
  const double rear = x2 + f4 / p.k4;
  const double sin_pitch = (rear - front) / (p.a + p.b);
  EquilibriumPoint eq;
  eq.x = Vec::Zero(8);
  eq.x << x1, x2, front + p.b * sin_pitch, std::asin(sin_pitch), 0, 0, 0, 0;
  eq.u = Vec::Constant(2, 0.5 * (p.u_lower + p.u_upper));
  eq.w = Vec::Zero(4);
  return eq;
}

/// Sampled-data halfcar with Hermite-interpolated road samples (w1, w2, w1', w2').
inline std::shared_ptr<ParametricSystem> make_system(const HalfcarParams & params, double sampling_period = 0.1, int substeps = 100)
{
  params.validate();
  const HalfcarParams p = params.resolved();
  auto sys = std::make_shared<ParametricSystem>();
  sys->name = "halfcar";
  sys->state_dim = 8;
  sys->control_dim = 2;
  sys->disturbance_dim = 4;
  sys->hold = DisturbanceHold::hermite;
  sys->sampling_period = sampling_period;
  sys->substeps_per_period = substeps;
  sys->derivative = [p](Eigen::Ref<const Vec> x, Eigen::Ref<const Vec> u, Eigen::Ref<const Vec> d, Eigen::Ref<Vec> dx) {
    derivative(x, u, d, p, dx);
  };
  sys->stage_integrand = [p](Eigen::Ref<const Vec> x, Eigen::Ref<const Vec> u, Eigen::Ref<const Vec> d) {
    return stage_cost_integrand(x, u, d, p);
  };
  sys->fused = [p](Eigen::Ref<const Vec> x, Eigen::Ref<const Vec> u, Eigen::Ref<const Vec> d, Eigen::Ref<Vec> dx) {
    return derivative_and_integrand(x, u, d, p, dx);
  };
  sys->monitor = [p](Eigen::Ref<const Vec> x, Eigen::Ref<const Vec> u, Eigen::Ref<const Vec> d) {
    return chassis_jerk(x, u, d, p);
  };
  sys->equilibrium = equilibrium(p);
  sys->bounds.control_lower = Vec::Constant(2, p.u_lower);
  sys->bounds.control_upper = Vec::Constant(2, p.u_upper);
  return sys;
}

/// Kinetic plus spring potential energy relative to the static equilibrium, on a flat road.
inline double mechanical_energy(const Vec & s, const HalfcarParams & params)
{
  const HalfcarParams p = params.resolved();
  const Vec e = s - equilibrium(p).x;
  const double sn = std::sin(s[3]) - std::sin(s[3] - e[3]);
  const double kinetic = 0.5 * (p.m1 * s[4] * s[4] + p.m2 * s[5] * s[5] + p.m3 * s[6] * s[6] + p.I * s[7] * s[7]);
  // Quadratic spring energy in deviation coordinates; gravity work cancels the static preload.
  const double s1 = e[0];
  const double s2 = e[1];
  const double s3 = e[2] - e[0] - p.b * sn;
  const double s4 = e[2] - e[1] + p.a * sn;
  const double potential = 0.5 * (p.k1 * s1 * s1 + p.k2 * s2 * s2 + p.k3 * s3 * s3 + p.k4 * s4 * s4);
  return kinetic + potential;
}

}  // namespace sensmpc::halfcar
