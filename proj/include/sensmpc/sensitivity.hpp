#pragma once

/**
 * @file
 * @brief Parametric sensitivities of the optimal control sequence and the first-order update
 * \f$ \bar u = u^\star + \partial_x u^\star (\bar x - x) + \partial_w u^\star (\bar w - w) \f$.
 *
 * At a solution satisfying LICQ, SSOC and SCC the active bounds stay active under small
 * parameter changes, so on the inactive coordinates I the implicit-function theorem gives
 * \f$ H_{II}\, \partial_p U_I = -\partial^2_{U_I p} J \f$, and active rows are zero.
 */

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <functional>
#include <optional>
#include <sstream>
#include <vector>

#include "errors.hpp"
#include "ocp.hpp"
#include "solver.hpp"

namespace sensmpc {

struct SensitivityOptions
{
  RegularityOptions regularity{};
  double condition_limit = 1e12;
};

/// dU*/dp for a generic objective J(U, p); throws when the solution is not regular.
struct ParametricSensitivity
{
  Mat dU_dp;
  RegularityReport regularity;
  double condition = 1.0;
};

template<typename ParamObjective>
ParametricSensitivity parametric_sensitivity(
  ParamObjective && J, const BoxSolution & sol, const Vec & p0, const SensitivityOptions & opt = {})
{
  const Vec & U = sol.x;
  const double step = opt.regularity.fd_step;
  const auto idx = inactive_indices(sol.active);
  const auto r = static_cast<Eigen::Index>(idx.size());

  ParametricSensitivity out;
  auto JU = [&](const Vec & v) { return J(v, p0); };
  const Mat H = r == 0 ? Mat() : fd_hessian(JU, U, idx, step);
  out.regularity = detail::regularity_from_hessian(sol, H, opt.regularity);
  if (!out.regularity.regular()) {
    std::ostringstream msg;
    msg << "sensitivity unavailable: scc=" << out.regularity.scc_ok << " (min multiplier "
        << out.regularity.min_active_multiplier << "), ssoc=" << out.regularity.ssoc_ok << " (min eigenvalue "
        << out.regularity.min_reduced_hessian_eigenvalue << ")";
    throw SensitivityUnavailable(msg.str());
  }

  out.dU_dp = Mat::Zero(U.size(), p0.size());
  if (r == 0) { return out; }

  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (H + H.transpose()));
  const double lmin = es.eigenvalues().minCoeff();
  const double lmax = es.eigenvalues().maxCoeff();
  out.condition = lmax / lmin;
  if (!(out.condition <= opt.condition_limit)) { throw IllConditioned("reduced Hessian is ill-conditioned"); }

  // Mixed second derivatives d^2 J / dU_I dp_j by central differences in both arguments.
  Mat B(r, p0.size());
  Vec Up = U;
  Vec pp = p0;
  for (Eigen::Index j = 0; j < p0.size(); ++j) {
    const double k = step * (1.0 + std::abs(p0[j]));
    for (Eigen::Index a = 0; a < r; ++a) {
      const Eigen::Index i = idx[static_cast<std::size_t>(a)];
      const double h = step * (1.0 + std::abs(U[i]));
      double acc = 0.0;
      for (int si : {1, -1}) {
        for (int sj : {1, -1}) {
          Up[i] = U[i] + si * h;
          pp[j] = p0[j] + sj * k;
          acc += si * sj * J(Up, pp);
        }
      }
      Up[i] = U[i];
      B(a, j) = acc / (4.0 * h * k);
    }
    pp[j] = p0[j];
  }
  if (!B.allFinite()) { throw RegularityIndeterminate("non-finite mixed derivatives"); }

  const Mat dUI = es.eigenvectors() * (es.eigenvalues().cwiseInverse().asDiagonal() * (es.eigenvectors().transpose() * (-B)));
  for (Eigen::Index a = 0; a < r; ++a) { out.dU_dp.row(idx[static_cast<std::size_t>(a)]) = dUI.row(a); }
  return out;
}

struct SensitivityMatrices
{
  /// (N m) x n
  Mat du_dx0;
  /// (N m) x (len(w) p), columns ordered as DisturbanceSequence::stacked().
  Mat du_dw;
  std::vector<ActiveBound> valid_active_set;
  RegularityReport regularity;
  double condition = 1.0;
};

namespace detail {

/// J_N as a function of the controls and the stacked parameters (x0, w), cached around the solution.
class ParametricOcpCost
{
public:
  ParametricOcpCost(const OcpProblem & problem, const Vec & U)
      : problem_(problem), cached_(*problem.sys, problem.x0, U, problem.w)
  {}

  double operator()(const Vec & U, const Vec & p) const
  {
    const Eigen::Index n = problem_.sys->state_dim;
    const auto w = DisturbanceSequence::from_stacked(p.tail(p.size() - n), problem_.w);
    return cached_(U, p.head(n), w);
  }

private:
  const OcpProblem & problem_;
  CachedHorizonCost cached_;
};

inline Vec ocp_parameters(const OcpProblem & problem)
{
  const Vec ws = problem.w.stacked();
  Vec p(problem.x0.size() + ws.size());
  p << problem.x0, ws;
  return p;
}

}  // namespace detail

/// Sensitivities of the solution of @p problem with respect to its initial state and disturbance samples.
inline SensitivityMatrices compute_sensitivities(
  const OcpProblem & problem, const OcpSolution & solution, const SensitivityOptions & opt = {})
{
  problem.validate();
  if (solution.controls.size() != problem.decision_dim()) { throw ContractError("compute_sensitivities: solution dimension mismatch"); }
  auto ps = parametric_sensitivity(detail::ParametricOcpCost(problem, solution.controls), as_box_solution(solution), detail::ocp_parameters(problem), opt);
  const Eigen::Index n = problem.sys->state_dim;
  SensitivityMatrices out;
  out.du_dx0 = ps.dU_dp.leftCols(n);
  out.du_dw = ps.dU_dp.rightCols(ps.dU_dp.cols() - n);
  out.valid_active_set = solution.active;
  out.regularity = ps.regularity;
  out.condition = ps.condition;
  return out;
}

struct UpdateResult
{
  /// Clipped updated sequence; the first block is the applied feedback.
  Vec controls;
  /// Unclipped first-order update.
  Vec raw;
  /// True when clipping changed the update, i.e. the active set would change.
  bool clipped = false;
};

/// First-order correction of the nominal sequence to the measured state and disturbance, clipped to the box.
inline UpdateResult apply_update(
  const OcpSolution & nominal, const SensitivityMatrices & sens, const Vec & nominal_x, const DisturbanceSequence & nominal_w,
  const Vec & measured_x, const DisturbanceSequence & measured_w, const Bounds & bounds)
{
  const Eigen::Index nu = nominal.controls.size();
  if (sens.du_dx0.rows() != nu || sens.du_dw.rows() != nu) { throw ContractError("apply_update: sensitivity rows mismatch"); }
  if (nominal_x.size() != sens.du_dx0.cols() || measured_x.size() != nominal_x.size()) {
    throw ContractError("apply_update: state dimension mismatch");
  }
  if (nominal_w.size() != measured_w.size() || nominal_w.dim() != measured_w.dim()) {
    throw ContractError("apply_update: disturbance layout mismatch");
  }
  const Vec dw = measured_w.stacked() - nominal_w.stacked();
  if (dw.size() != sens.du_dw.cols()) { throw ContractError("apply_update: disturbance dimension mismatch"); }
  const Eigen::Index m = bounds.control_dim();
  if (m == 0 || nu % m != 0) { throw ContractError("apply_update: bounds do not match the control sequence"); }

  UpdateResult out;
  out.raw = nominal.controls + sens.du_dx0 * (measured_x - nominal_x) + sens.du_dw * dw;
  const Eigen::Index N = nu / m;
  out.controls = out.raw.cwiseMax(bounds.control_lower.replicate(N, 1)).cwiseMin(bounds.control_upper.replicate(N, 1));
  out.clipped = (out.controls - out.raw).cwiseAbs().maxCoeff() > 0.0;
  return out;
}

struct LipschitzEstimates
{
  double L_ell = 0.0;
  double L_J = 0.0;
  double L_u = 0.0;
  int sample_count = 0;
  int skipped = 0;
};

/// A nominal/measured parameter pair for the Lipschitz sampling.
struct SamplePair
{
  Vec x;
  Vec x_bar;
  DisturbanceSequence w;
  DisturbanceSequence w_bar;
  /// Optional warm start for the nominal solve.
  std::optional<Vec> guess;
};

/// Builds the OCP for a given initial state and disturbance sequence.
using ProblemFamily = std::function<OcpProblem(const Vec & x, const DisturbanceSequence & w)>;

/// Stage cost of the first interval, l(x, u, w(0)).
inline double first_stage_cost(const ParametricSystem & sys, const Vec & x, const Vec & u, const DisturbanceSequence & w)
{
  return discretize_step(sys, x, u, DisturbanceSegment(w, 0, sys.sampling_period)).stage_cost;
}

/**
 * @brief Running maxima of the empirical Lipschitz ratios of the sensitivity-updated feedback.
 *
 * Each pair is solved at (x, w), updated to (x_bar, w_bar) and compared against the nominal.
 * Consecutive pairs sharing the nominal (x, w) reuse its solution and sensitivities.
 * Pairs with zero deviation or without a regular solution are skipped and counted.
 */
inline LipschitzEstimates estimate_lipschitz(
  const ProblemFamily & family, const std::vector<SamplePair> & pairs, LipschitzEstimates prior = {},
  const SolverOptions & solver = {}, const SensitivityOptions & sopt = {})
{
  LipschitzEstimates est = prior;
  struct Nominal
  {
    Vec x, w;
    OcpSolution sol;
    std::optional<SensitivityMatrices> sens;
  };
  std::optional<Nominal> last;
  for (const auto & pair : pairs) {
    const double denom = (pair.x_bar - pair.x).norm() + (pair.w_bar.stacked() - pair.w.stacked()).norm();
    if (!(denom > 0.0)) {
      ++est.skipped;
      continue;
    }
    try {
      const OcpProblem nominal = family(pair.x, pair.w);
      const OcpProblem measured = family(pair.x_bar, pair.w_bar);
      const Vec w_stacked = pair.w.stacked();
      if (!last || last->x.size() != pair.x.size() || last->w.size() != w_stacked.size() || last->x != pair.x || last->w != w_stacked) {
        last.reset();
        const Vec guess = pair.guess.value_or(0.5 * (nominal.stacked_lower() + nominal.stacked_upper()));
        Nominal nom{pair.x, w_stacked, solve_ocp(nominal, guess, solver), std::nullopt};
        last = std::move(nom);
        last->sens = compute_sensitivities(nominal, last->sol, sopt);
      }
      if (!last->sens) { throw SensitivityUnavailable("nominal of this pair group has no sensitivities"); }
      const OcpSolution & sol = last->sol;
      const UpdateResult upd = apply_update(sol, *last->sens, pair.x, pair.w, pair.x_bar, pair.w_bar, nominal.bounds);

      const auto & sys = *nominal.sys;
      const Eigen::Index m = sys.control_dim;
      const double ell_nom = first_stage_cost(sys, pair.x, sol.controls.head(m), pair.w);
      const double ell_upd = first_stage_cost(sys, pair.x_bar, upd.controls.head(m), pair.w_bar);
      const double J_upd = measured.cost(upd.controls);

      est.L_ell = std::max(est.L_ell, std::abs(ell_upd - ell_nom) / denom);
      est.L_J = std::max(est.L_J, std::abs(J_upd - sol.value) / denom);
      est.L_u = std::max(est.L_u, (upd.controls - sol.controls).norm() / denom);
      ++est.sample_count;
    } catch (const SensitivityUnavailable &) {
      ++est.skipped;
    } catch (const IllConditioned &) {
      ++est.skipped;
    } catch (const RegularityIndeterminate &) {
      ++est.skipped;
    } catch (const MaxIterationsError &) {
      ++est.skipped;
    }
  }
  return est;
}

}  // namespace sensmpc
