#pragma once

/**
 * @file
 * @brief Direct single shooting for the finite-horizon problem
 * \f$ V_N(x, w) = \min_{U \in \mathbb{U}^N} J_N(x, U, w) \f$ with box constraints on U.
 *
 * The core minimizer works on any objective `double(const Vec &)` over a box, so the OCP layer
 * and the plain test objectives share one code path.
 */

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <vector>

#include "errors.hpp"
#include "ocp.hpp"

namespace sensmpc {

enum class GradientMode { forward, central };

struct GradientOptions
{
  GradientMode mode = GradientMode::central;
  /// Relative step; coordinate i uses step * (1 + |U_i|).
  double step = 1e-6;
};

enum class ActiveBound : std::uint8_t { none, lower, upper };

enum class Termination {
  /// Projected-gradient norm reached the tolerance.
  tolerance,
  /// No Armijo step could be found at a point whose projected gradient is below the stall tolerance.
  stalled,
};

struct SolverOptions
{
  GradientOptions gradient{};
  double tolerance = 1e-8;
  /// Also converged when the projected gradient is below relative_tolerance * |J| (finite-difference accuracy scales with |J|).
  double relative_tolerance = 1e-9;
  /// Accepted residual when the line search can no longer make progress (finite-difference noise floor).
  double stall_tolerance = 1e-6;
  int max_iterations = 500;
  double armijo = 1e-4;
  int max_backtracks = 60;
  /// Distance below which a coordinate counts as sitting on its bound.
  double bound_tolerance = 1e-10;
};

struct SolverStats
{
  int iterations = 0;
  int cost_evaluations = 0;
  int gradient_evaluations = 0;
};

/// Result of the generic box-constrained minimizer.
struct BoxSolution
{
  Vec x;
  double value = 0.0;
  Vec lower_multipliers;
  Vec upper_multipliers;
  std::vector<ActiveBound> active;
  double kkt_residual = 0.0;
  Termination termination = Termination::tolerance;
  SolverStats stats;
  /// Final quasi-Newton Hessian approximation (usable as the initial metric of a nearby problem).
  Mat metric;
};

/// Finite-difference gradient of @p J at @p U.
template<typename Objective>
Vec fd_gradient(Objective && J, const Vec & U, const GradientOptions & opt = {}, int * evaluations = nullptr)
{
  Vec g(U.size());
  Vec probe = U;
  double f0 = 0.0;
  if (opt.mode == GradientMode::forward) {
    f0 = J(probe);
    if (evaluations) { ++*evaluations; }
    if (!std::isfinite(f0)) { throw GradientEvaluationError("non-finite cost at the gradient base point"); }
  }
  for (Eigen::Index i = 0; i < U.size(); ++i) {
    const double h = opt.step * (1.0 + std::abs(U[i]));
    probe[i] = U[i] + h;
    const double fp = J(probe);
    if (opt.mode == GradientMode::forward) {
      g[i] = (fp - f0) / h;
      if (evaluations) { ++*evaluations; }
      if (!std::isfinite(fp)) { throw GradientEvaluationError("non-finite cost at a perturbed point"); }
    } else {
      probe[i] = U[i] - h;
      const double fm = J(probe);
      if (evaluations) { *evaluations += 2; }
      if (!std::isfinite(fp) || !std::isfinite(fm)) {
        throw GradientEvaluationError("non-finite cost at a perturbed point");
      }
      g[i] = (fp - fm) / (2.0 * h);
    }
    probe[i] = U[i];
  }
  return g;
}

namespace detail {

inline Vec projected_gradient(const Vec & x, const Vec & g, const Vec & lo, const Vec & hi, double tol)
{
  Vec pg = g;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if ((x[i] <= lo[i] + tol && g[i] > 0.0) || (x[i] >= hi[i] - tol && g[i] < 0.0)) { pg[i] = 0.0; }
  }
  return pg;
}

}  // namespace detail

/**
 * @brief Projected quasi-Newton (BFGS) minimization of @p J over the box [lo, hi].
 *
 * Search directions are formed on the coordinates not blocked by a bound; steps are projected
 * back onto the box and accepted by backtracking Armijo (halving). When the line search fails
 * with forward differences, the gradient is switched to central differences. Multipliers are recovered
 * from the gradient at the solution: lambda_i = |g_i| for coordinates on a bound whose gradient
 * points outward of the box interior, 0 otherwise. @p initial_metric (symmetric positive
 * definite) replaces the scaled identity as the first Hessian approximation.
 */
template<typename Objective, typename Gradient>
BoxSolution minimize_box(
  Objective && J, Gradient && G, const Vec & lo, const Vec & hi, const Vec & guess, const SolverOptions & opt = {}, const Mat * initial_metric = nullptr)
{
  const Eigen::Index n = guess.size();
  if (lo.size() != n || hi.size() != n) { throw ContractError("minimize_box: bound dimension mismatch"); }
  for (Eigen::Index i = 0; i < n; ++i) {
    if (lo[i] > hi[i]) { throw InfeasibleError("minimize_box: empty box"); }
  }

  BoxSolution sol;
  auto & st = sol.stats;
  auto cost = [&](const Vec & v) {
    ++st.cost_evaluations;
    return J(v);
  };
  // Forward differences (when requested) until the line search stalls, then central differences.
  GradientOptions gopt = opt.gradient;
  auto grad = [&](const Vec & v) {
    ++st.gradient_evaluations;
    return G(v, gopt, &st.cost_evaluations);
  };

  Vec x = guess.cwiseMax(lo).cwiseMin(hi);
  double f = cost(x);
  if (!std::isfinite(f)) { throw InfeasibleError("minimize_box: cost undefined at the initial point"); }
  Vec g = grad(x);
  Mat B = Mat::Identity(n, n);
  bool identity_metric = true;
  if (initial_metric) {
    if (initial_metric->rows() != n || initial_metric->cols() != n) { throw ContractError("minimize_box: initial metric dimension mismatch"); }
    if (initial_metric->allFinite()) {
      B = *initial_metric;
      identity_metric = false;
    }
  }
  bool converged = false;
  double pg_norm = 0.0;

  for (st.iterations = 0; st.iterations < opt.max_iterations; ++st.iterations) {
    const Vec pg = detail::projected_gradient(x, g, lo, hi, opt.bound_tolerance);
    pg_norm = pg.norm();
    if (pg_norm <= std::max(opt.tolerance, opt.relative_tolerance * std::abs(f))) {
      converged = true;
      sol.termination = Termination::tolerance;
      break;
    }

    std::vector<Eigen::Index> free;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (pg[i] != 0.0) { free.push_back(i); }
    }

    // Quasi-Newton step on the free coordinates: B_FF d_F = -g_F.
    auto direction = [&]() {
      const auto k = static_cast<Eigen::Index>(free.size());
      Mat Bf(k, k);
      Vec gf(k);
      for (Eigen::Index a = 0; a < k; ++a) {
        gf[a] = g[free[static_cast<std::size_t>(a)]];
        for (Eigen::Index b = 0; b < k; ++b) { Bf(a, b) = B(free[static_cast<std::size_t>(a)], free[static_cast<std::size_t>(b)]); }
      }
      Vec d = Vec::Zero(n);
      Eigen::LLT<Mat> llt(Bf);
      if (llt.info() != Eigen::Success) { return d; }
      const Vec df = llt.solve(-gf);
      for (Eigen::Index a = 0; a < k; ++a) { d[free[static_cast<std::size_t>(a)]] = df[a]; }
      return d;
    };
    Vec d = direction();
    // Components pushing a coordinate on its bound further out would be projected away.
    for (Eigen::Index i = 0; i < n; ++i) {
      if ((x[i] <= lo[i] + opt.bound_tolerance && d[i] < 0.0) || (x[i] >= hi[i] - opt.bound_tolerance && d[i] > 0.0)) { d[i] = 0.0; }
    }
    if (!(g.dot(d) < 0.0) || !d.allFinite()) {
      B.setIdentity();
      identity_metric = true;
      d = -pg;
    }

    bool accepted = false;
    Vec x_new;
    double f_new = f;
    for (int attempt = 0; attempt < 2 && !accepted; ++attempt) {
      double step = 1.0;
      for (int bt = 0; bt < opt.max_backtracks; ++bt, step *= 0.5) {
        x_new = (x + step * d).cwiseMax(lo).cwiseMin(hi);
        const Vec s = x_new - x;
        if (s.cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + x.cwiseAbs().maxCoeff())) { break; }
        f_new = cost(x_new);
        if (std::isfinite(f_new) && f_new <= f + opt.armijo * g.dot(s) && f_new < f) {
          accepted = true;
          break;
        }
      }
      if (!accepted && !identity_metric) {
        B.setIdentity();
        identity_metric = true;
        d = -pg;
      } else {
        break;
      }
    }
    if (!accepted && gopt.mode == GradientMode::forward) {
      gopt.mode = GradientMode::central;
      g = grad(x);
      continue;
    }
    if (!accepted) {
      if (pg_norm <= opt.stall_tolerance * std::max(1.0, std::abs(f))) {
        converged = true;
        sol.termination = Termination::stalled;
        break;
      }
      throw MaxIterationsError("minimize_box: line search failed", x, f, pg_norm);
    }

    const Vec g_new = grad(x_new);
    const Vec s = x_new - x;
    const Vec y = g_new - g;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (identity_metric) { B *= y.squaredNorm() / sy; }
      const Vec Bs = B * s;
      B += y * y.transpose() / sy - Bs * Bs.transpose() / s.dot(Bs);
      identity_metric = false;
    }
    x = x_new;
    f = f_new;
    g = g_new;
  }

  if (!converged) {
    const Vec pg = detail::projected_gradient(x, g, lo, hi, opt.bound_tolerance);
    pg_norm = pg.norm();
    if (pg_norm > std::max(opt.tolerance, opt.relative_tolerance * std::abs(f))) { throw MaxIterationsError("minimize_box: iteration limit reached", x, f, pg_norm); }
    sol.termination = Termination::tolerance;
  }

  sol.lower_multipliers = Vec::Zero(n);
  sol.upper_multipliers = Vec::Zero(n);
  sol.active.assign(static_cast<std::size_t>(n), ActiveBound::none);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (x[i] <= lo[i] + opt.bound_tolerance) {
      x[i] = lo[i];
      sol.active[static_cast<std::size_t>(i)] = ActiveBound::lower;
      sol.lower_multipliers[i] = std::max(g[i], 0.0);
    } else if (x[i] >= hi[i] - opt.bound_tolerance) {
      x[i] = hi[i];
      sol.active[static_cast<std::size_t>(i)] = ActiveBound::upper;
      sol.upper_multipliers[i] = std::max(-g[i], 0.0);
    }
  }
  sol.x = x;
  sol.value = f;
  sol.kkt_residual = pg_norm;
  sol.metric = std::move(B);
  return sol;
}

/// minimize_box with finite-difference gradients of @p J.
template<typename Objective>
BoxSolution minimize_box(Objective && J, const Vec & lo, const Vec & hi, const Vec & guess, const SolverOptions & opt = {})
{
  auto G = [&J](const Vec & v, const GradientOptions & g, int * evaluations) { return fd_gradient(J, v, g, evaluations); };
  return minimize_box(J, G, lo, hi, guess, opt);
}

struct RegularityReport
{
  bool licq_ok = true;
  bool ssoc_ok = true;
  bool scc_ok = true;
  /// +inf when no bound is active.
  double min_active_multiplier = std::numeric_limits<double>::infinity();
  /// +inf when every coordinate is active (empty reduced space).
  double min_reduced_hessian_eigenvalue = std::numeric_limits<double>::infinity();

  bool regular() const { return licq_ok && ssoc_ok && scc_ok; }
};

struct RegularityOptions
{
  double fd_step = 1e-4;
  double scc_tolerance = 1e-6;
  double ssoc_tolerance = 1e-8;
};

/// Indices of coordinates not sitting on a bound.
inline std::vector<Eigen::Index> inactive_indices(const std::vector<ActiveBound> & active)
{
  std::vector<Eigen::Index> out;
  for (std::size_t i = 0; i < active.size(); ++i) {
    if (active[i] == ActiveBound::none) { out.push_back(static_cast<Eigen::Index>(i)); }
  }
  return out;
}

/**
 * @brief Central finite-difference Hessian of @p J restricted to @p idx.
 *
 * Off-diagonal entries are the central difference of the central-difference gradient; the
 * diagonal uses the three-point second difference.
 */
template<typename Objective>
Mat fd_hessian(Objective && J, const Vec & U, const std::vector<Eigen::Index> & idx, double step)
{
  const auto r = static_cast<Eigen::Index>(idx.size());
  Mat H(r, r);
  Vec p = U;
  const double f0 = J(U);
  auto h_of = [&](Eigen::Index i) { return step * (1.0 + std::abs(U[i])); };
  for (Eigen::Index a = 0; a < r; ++a) {
    const Eigen::Index i = idx[static_cast<std::size_t>(a)];
    const double hi = h_of(i);
    p[i] = U[i] + hi;
    const double fp = J(p);
    p[i] = U[i] - hi;
    const double fm = J(p);
    p[i] = U[i];
    H(a, a) = (fp - 2.0 * f0 + fm) / (hi * hi);
    for (Eigen::Index b = a + 1; b < r; ++b) {
      const Eigen::Index j = idx[static_cast<std::size_t>(b)];
      const double hj = h_of(j);
      double acc = 0.0;
      for (int si : {1, -1}) {
        for (int sj : {1, -1}) {
          p[i] = U[i] + si * hi;
          p[j] = U[j] + sj * hj;
          acc += si * sj * J(p);
        }
      }
      p[i] = U[i];
      p[j] = U[j];
      H(a, b) = H(b, a) = acc / (4.0 * hi * hj);
    }
  }
  return H;
}

namespace detail {

/// Fills the regularity report from the multipliers and an already computed reduced Hessian.
inline RegularityReport regularity_from_hessian(const BoxSolution & sol, const Mat & H, const RegularityOptions & opt)
{
  RegularityReport rep;
  // One bound per coordinate can be active because lower < upper, so the active gradients are
  // distinct unit vectors.
  rep.licq_ok = true;
  for (std::size_t i = 0; i < sol.active.size(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    if (sol.active[i] == ActiveBound::lower) {
      rep.min_active_multiplier = std::min(rep.min_active_multiplier, sol.lower_multipliers[k]);
    } else if (sol.active[i] == ActiveBound::upper) {
      rep.min_active_multiplier = std::min(rep.min_active_multiplier, sol.upper_multipliers[k]);
    }
  }
  rep.scc_ok = rep.min_active_multiplier > opt.scc_tolerance;
  if (H.size() > 0) {
    if (!H.allFinite()) { throw RegularityIndeterminate("non-finite reduced Hessian"); }
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (H + H.transpose()), Eigen::EigenvaluesOnly);
    rep.min_reduced_hessian_eigenvalue = es.eigenvalues().minCoeff();
  }
  rep.ssoc_ok = rep.min_reduced_hessian_eigenvalue > opt.ssoc_tolerance;
  return rep;
}

}  // namespace detail

/// LICQ, SCC and SSOC at a box-constrained solution of @p J.
template<typename Objective>
RegularityReport check_regularity_box(Objective && J, const BoxSolution & sol, const RegularityOptions & opt = {})
{
  const auto idx = inactive_indices(sol.active);
  const Mat H = idx.empty() ? Mat() : fd_hessian(J, sol.x, idx, opt.fd_step);
  return detail::regularity_from_hessian(sol, H, opt);
}

/// One finite-horizon optimal control problem.
struct OcpProblem
{
  std::shared_ptr<const ParametricSystem> sys;
  Vec x0;
  DisturbanceSequence w;
  int horizon = 2;
  Bounds bounds;

  void validate() const
  {
    if (!sys) { throw ContractError("ocp: missing system"); }
    if (horizon < 2) { throw ContractError("ocp: horizon must be at least 2"); }
    if (x0.size() != sys->state_dim) { throw ContractError("ocp: initial state has wrong dimension"); }
    bounds.validate();
    if (bounds.control_dim() != sys->control_dim) { throw ContractError("ocp: bounds have wrong dimension"); }
    check_sequence(*sys, static_cast<std::size_t>(horizon), w);
  }

  Eigen::Index decision_dim() const { return horizon * sys->control_dim; }

  Vec stacked_lower() const { return bounds.control_lower.replicate(horizon, 1); }
  Vec stacked_upper() const { return bounds.control_upper.replicate(horizon, 1); }

  /// J_N(x0, U, w).
  double cost(const Vec & U) const { return horizon_cost(*sys, x0, U, w); }
};

struct OcpSolution
{
  Vec controls;
  double value = 0.0;
  Vec lower_multipliers;
  Vec upper_multipliers;
  std::vector<ActiveBound> active;
  Trajectory trajectory;
  double kkt_residual = 0.0;
  Termination termination = Termination::tolerance;
  SolverStats stats;
  Mat metric;

  std::vector<Eigen::Index> active_set() const
  {
    std::vector<Eigen::Index> out;
    for (std::size_t i = 0; i < active.size(); ++i) {
      if (active[i] != ActiveBound::none) { out.push_back(static_cast<Eigen::Index>(i)); }
    }
    return out;
  }

  Vec first_control(Eigen::Index m) const { return controls.head(m); }
};

/// Finite-difference gradient of J_N; perturbing u(k) re-simulates from interval k only.
inline Vec gradient(const OcpProblem & problem, const Vec & U, const GradientOptions & opt = {}, int * evaluations = nullptr)
{
  if (!U.allFinite()) { throw ContractError("gradient: non-finite controls"); }
  const CachedHorizonCost cached(*problem.sys, problem.x0, U, problem.w);
  return fd_gradient(cached, U, opt, evaluations);
}

/// Solves the OCP from @p initial_guess (projected onto the box), optionally seeding the quasi-Newton metric.
inline OcpSolution solve_ocp(const OcpProblem & problem, const Vec & initial_guess, const SolverOptions & opt = {}, const Mat * initial_metric = nullptr)
{
  problem.validate();
  if (initial_guess.size() != problem.decision_dim()) { throw ContractError("solve_ocp: initial guess has wrong dimension"); }
  auto J = [&](const Vec & v) { return problem.cost(v); };
  auto G = [&](const Vec & v, const GradientOptions & g, int * evaluations) { return gradient(problem, v, g, evaluations); };
  BoxSolution box = minimize_box(J, G, problem.stacked_lower(), problem.stacked_upper(), initial_guess, opt, initial_metric);
  OcpSolution sol;
  sol.controls = std::move(box.x);
  sol.lower_multipliers = std::move(box.lower_multipliers);
  sol.upper_multipliers = std::move(box.upper_multipliers);
  sol.active = std::move(box.active);
  sol.kkt_residual = box.kkt_residual;
  sol.termination = box.termination;
  sol.stats = box.stats;
  sol.metric = std::move(box.metric);
  sol.trajectory = rollout(*problem.sys, problem.x0, sol.controls, problem.w);
  sol.value = evaluate_cost(sol.trajectory);
  return sol;
}

/// Metric for a shifted sequence: drops the first control block and repeats the last diagonal block.
inline Mat shifted_metric(const Mat & B, Eigen::Index m)
{
  const Eigen::Index n = B.rows();
  const Eigen::Index len = n - m;
  Mat out = Mat::Zero(n, n);
  out.topLeftCorner(len, len) = B.bottomRightCorner(len, len);
  out.bottomRightCorner(m, m) = B.bottomRightCorner(m, m);
  return out;
}

/// Previous optimal sequence shifted by one step with the last control repeated.
inline Vec shifted_guess(const Vec & U, Eigen::Index m)
{
  Vec out(U.size());
  const Eigen::Index len = U.size() - m;
  out.head(len) = U.tail(len);
  out.tail(m) = U.tail(m);
  return out;
}

inline BoxSolution as_box_solution(const OcpSolution & s)
{
  BoxSolution b;
  b.x = s.controls;
  b.value = s.value;
  b.lower_multipliers = s.lower_multipliers;
  b.upper_multipliers = s.upper_multipliers;
  b.active = s.active;
  b.kkt_residual = s.kkt_residual;
  b.termination = s.termination;
  b.stats = s.stats;
  return b;
}

inline RegularityReport check_regularity(const OcpProblem & problem, const OcpSolution & solution, const RegularityOptions & opt = {})
{
  if (solution.kkt_residual > 1e-6 * std::max(1.0, std::abs(solution.value))) {
    throw ContractError("check_regularity: solution is not a KKT point");
  }
  const CachedHorizonCost cached(*problem.sys, problem.x0, solution.controls, problem.w);
  return check_regularity_box(cached, as_box_solution(solution), opt);
}

}  // namespace sensmpc
