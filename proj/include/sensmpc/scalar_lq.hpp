#pragma once

/**
 * @file
 * @brief Scalar linear-quadratic test plant x' = u + w with integrand x^2 + u^2, and linear
 * systems x' = A x + B u + E w with integrand x'Qx + u'Ru.
 */

#include <Eigen/Core>

#include <functional>
#include <memory>
#include <random>

#include "errors.hpp"
#include "ocp.hpp"

namespace sensmpc {

struct LinearQuadraticSpec
{
  Mat A, B, E, Q, R;
  Vec u_lower, u_upper;
  double sampling_period = 1.0;
  int substeps = 1;
};

inline std::shared_ptr<ParametricSystem> make_linear_quadratic(const LinearQuadraticSpec & s)
{
  const Eigen::Index n = s.A.rows(), m = s.B.cols(), p = s.E.cols();
  if (s.A.cols() != n || s.B.rows() != n || s.E.rows() != n || s.Q.rows() != n || s.Q.cols() != n || s.R.rows() != m ||
      s.R.cols() != m || s.u_lower.size() != m || s.u_upper.size() != m) {
    throw ContractError("linear-quadratic: inconsistent matrix dimensions");
  }
  auto sys = std::make_shared<ParametricSystem>();
  sys->name = "linear-quadratic";
  sys->state_dim = n;
  sys->control_dim = m;
  sys->disturbance_dim = p;
  sys->hold = DisturbanceHold::zero_order;
  sys->sampling_period = s.sampling_period;
  sys->substeps_per_period = s.substeps;
  sys->derivative = [A = s.A, B = s.B, E = s.E](Eigen::Ref<const Vec> x, Eigen::Ref<const Vec> u, Eigen::Ref<const Vec> d, Eigen::Ref<Vec> dx) {
    dx.noalias() = A * x + B * u + E * d;
  };
  sys->stage_integrand = [Q = s.Q, R = s.R](Eigen::Ref<const Vec> x, Eigen::Ref<const Vec> u, Eigen::Ref<const Vec>) {
    return x.dot(Q * x) + u.dot(R * u);
  };
  sys->equilibrium = {Vec::Zero(n), Vec::Zero(m), Vec::Zero(p)};
  sys->bounds.control_lower = s.u_lower;
  sys->bounds.control_upper = s.u_upper;
  sys->bounds.validate();
  return sys;
}

/// x' = u + w, integrand x^2 + u^2.
inline std::shared_ptr<ParametricSystem> make_scalar_lq(double sampling_period = 1.0, int substeps = 1, double bound = 10.0)
{
  LinearQuadraticSpec s;
  s.A = Mat::Zero(1, 1);
  s.B = Mat::Ones(1, 1);
  s.E = Mat::Ones(1, 1);
  s.Q = Mat::Ones(1, 1);
  s.R = Mat::Ones(1, 1);
  s.u_lower = Vec::Constant(1, -bound);
  s.u_upper = Vec::Constant(1, bound);
  s.sampling_period = sampling_period;
  s.substeps = substeps;
  auto sys = make_linear_quadratic(s);
  sys->name = "scalar-lq";
  return sys;
}

/**
 * @brief Disturbance channel for zero-order-hold systems: the controller measures the current
 * value with additive noise and forecasts it as constant over the horizon.
 */
class HeldSignalChannel : public DisturbanceChannel
{
public:
  using Signal = std::function<Vec(double)>;

  explicit HeldSignalChannel(Signal signal) : signal_(std::move(signal)) {}

  void truth(double t, Vec & d) const override { d = signal_(t); }

  Vec true_sample(double t) const override { return signal_(t); }

  Vec observe(double t, double noise_amplitude, std::mt19937_64 & rng) override
  {
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    last_ = signal_(t);
    for (Eigen::Index i = 0; i < last_.size(); ++i) { last_[i] += noise_amplitude * unit(rng); }
    return last_;
  }

  DisturbanceSequence forecast(double, double, int count) const override
  {
    DisturbanceSequence seq;
    seq.hold = DisturbanceHold::zero_order;
    seq.samples.assign(static_cast<std::size_t>(count), last_);
    return seq;
  }

private:
  Signal signal_;
  Vec last_;
};

}  // namespace sensmpc
