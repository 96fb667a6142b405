#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <memory>
#include <vector>

#include <sensmpc/halfcar.hpp>
#include <sensmpc/ocp.hpp>
#include <sensmpc/solver.hpp>

namespace sensmpc::test {

inline double rel_err(double got, double want) { return std::abs(got - want) / std::max(std::abs(want), 1e-300); }

inline double rel_err(const Vec & got, const Vec & want) { return (got - want).norm() / std::max(want.norm(), 1e-300); }

inline Vec vec(std::initializer_list<double> v)
{
  Vec out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) { out[i++] = x; }
  return out;
}

/// Flat road as a Hermite sequence of @p len samples (heights and rates zero).
inline DisturbanceSequence flat_road(std::size_t len)
{
  return {std::vector<Vec>(len, Vec::Zero(4)), DisturbanceHold::hermite};
}

/// Road samples (w1, w2, w1', w2') of a sine under both wheels, rear delayed by @p delay.
inline DisturbanceSequence sine_road(std::size_t len, double amplitude, double freq, double delay, double period = 0.1)
{
  DisturbanceSequence seq;
  seq.hold = DisturbanceHold::hermite;
  const double om = 2 * M_PI * freq;
  for (std::size_t k = 0; k < len; ++k) {
    const double t = static_cast<double>(k) * period;
    Vec s(4);
    s << amplitude * std::sin(om * t), amplitude * std::sin(om * (t - delay)), amplitude * om * std::cos(om * t),
      amplitude * om * std::cos(om * (t - delay));
    seq.samples.push_back(s);
  }
  return seq;
}

inline std::shared_ptr<const ParametricSystem> default_halfcar(int substeps = 100)
{
  return halfcar::make_system(halfcar::HalfcarParams{}, 0.1, substeps);
}

/// Equilibrium with the chassis lifted by @p heave.
inline Vec lifted(const ParametricSystem & sys, double heave = 0.01)
{
  Vec x = sys.equilibrium.x;
  x[2] += heave;
  return x;
}

inline OcpProblem halfcar_problem(const std::shared_ptr<const ParametricSystem> & sys, const Vec & x0, const DisturbanceSequence & w, int N = 5)
{
  return OcpProblem{sys, x0, w, N, sys->bounds};
}

}  // namespace sensmpc::test
