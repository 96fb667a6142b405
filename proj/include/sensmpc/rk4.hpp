#pragma once

/**
 * @file
 * @brief Classical fixed-step fourth order Runge-Kutta integration.
 */

#include <Eigen/Core>

namespace sensmpc {

/// Scratch buffers reused across steps so that integration loops do not allocate.
struct Rk4Workspace
{
  Eigen::VectorXd k1, k2, k3, k4, tmp;

  void resize(Eigen::Index n)
  {
    if (k1.size() != n) {
      k1.resize(n);
      k2.resize(n);
      k3.resize(n);
      k4.resize(n);
      tmp.resize(n);
    }
  }
};

/**
 * @brief One RK4 step of y' = f(t, y) from t to t + h, in place.
 *
 * @p f is called as `f(t, y, dydt)` and must write the derivative into `dydt`.
 */
template<typename F>
void rk4_step(F && f, double t, double h, Eigen::VectorXd & y, Rk4Workspace & ws)
{
  ws.resize(y.size());
  f(t, y, ws.k1);
  ws.tmp.noalias() = y + (0.5 * h) * ws.k1;
  f(t + 0.5 * h, ws.tmp, ws.k2);
  ws.tmp.noalias() = y + (0.5 * h) * ws.k2;
  f(t + 0.5 * h, ws.tmp, ws.k3);
  ws.tmp.noalias() = y + h * ws.k3;
  f(t + h, ws.tmp, ws.k4);
  y += (h / 6.0) * (ws.k1 + 2.0 * ws.k2 + 2.0 * ws.k3 + ws.k4);
}

/// Integrates over [t0, t0 + duration] with @p steps equal RK4 steps.
template<typename F>
Eigen::VectorXd rk4_integrate(F && f, double t0, double duration, int steps, Eigen::VectorXd y)
{
  Rk4Workspace ws;
  const double h = duration / steps;
  for (int i = 0; i < steps; ++i) { rk4_step(f, t0 + i * h, h, y, ws); }
  return y;
}

}  // namespace sensmpc
