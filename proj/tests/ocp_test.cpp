#include <gtest/gtest.h>

#include <sensmpc/ocp.hpp>
#include <sensmpc/rk4.hpp>
#include <sensmpc/scalar_lq.hpp>

#include "support.hpp"

using namespace sensmpc;
using sensmpc::test::rel_err;
using sensmpc::test::vec;

namespace {

// Reference integration of the halfcar (sympy transcription, DOP853 at rtol 1e-13), see tests/oracles.
const double kStepState[] = {0.019855748081712095, 0.019855748081712095, 0.059812926210130866, 0,
                             -0.039828202358085082, -0.039828202358085082, -0.10897730259992407, 0};
constexpr double kStepCost = 368.38293886794816;
constexpr double kHorizonCost = 365.50735375312598;

auto zero_signal(Eigen::Index p)
{
  return [p](double, Vec & d) { d = Vec::Zero(p); };
}

/// x' = x^2, which leaves the double range in finite time.
std::shared_ptr<ParametricSystem> blow_up_system()
{
  auto sys = std::make_shared<ParametricSystem>();
  sys->name = "blow-up";
  sys->state_dim = 1;
  sys->control_dim = 1;
  sys->disturbance_dim = 1;
  sys->sampling_period = 1.0;
  sys->substeps_per_period = 4;
  sys->derivative = [](Eigen::Ref<const Vec> x, Eigen::Ref<const Vec>, Eigen::Ref<const Vec>, Eigen::Ref<Vec> dx) { dx[0] = x[0] * x[0]; };
  sys->stage_integrand = [](Eigen::Ref<const Vec>, Eigen::Ref<const Vec>, Eigen::Ref<const Vec>) { return 0.0; };
  sys->bounds.control_lower = vec({-1});
  sys->bounds.control_upper = vec({1});
  return sys;
}

}  // namespace

TEST(DiscretizeStep, IntegratorOnConstantControl)
{
  const auto sys = make_scalar_lq(1.0, 1);
  const StepResult r = discretize_step(*sys, vec({0.0}), vec({1.0}), zero_signal(1));
  EXPECT_DOUBLE_EQ(r.state[0], 1.0);
  // integral of t^2 + 1 over [0, 1]
  EXPECT_NEAR(r.stage_cost, 4.0 / 3.0, 1e-15);
}

TEST(DiscretizeStep, HalfcarEquilibriumIsFixedPoint)
{
  const auto sys = test::default_halfcar();
  const auto w = test::flat_road(2);
  const StepResult r = discretize_step(*sys, sys->equilibrium.x, sys->equilibrium.u, DisturbanceSegment(w, 0, 0.1));
  EXPECT_LE((r.state - sys->equilibrium.x).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE(r.stage_cost, 1e-20);
}

TEST(DiscretizeStep, HalfcarMatchesHalvedSubstepsAndReference)
{
  const auto coarse = test::default_halfcar(100);
  const auto fine = test::default_halfcar(200);
  const auto w = test::flat_road(2);
  const Vec x0 = test::lifted(*coarse);
  const Vec u = vec({2.6, 2.6});
  const StepResult a = discretize_step(*coarse, x0, u, DisturbanceSegment(w, 0, 0.1));
  const StepResult b = discretize_step(*fine, x0, u, DisturbanceSegment(w, 0, 0.1));
  EXPECT_LE(rel_err(a.state, b.state), 1e-6);
  EXPECT_LE(rel_err(a.stage_cost, b.stage_cost), 1e-4);

  const Vec ref = Eigen::Map<const Vec>(kStepState, 8);
  EXPECT_LE(rel_err(a.state, ref), 1e-6);
  EXPECT_LE(rel_err(a.stage_cost, kStepCost), 1e-4);
  EXPECT_LE(rel_err(b.stage_cost, kStepCost), 1e-5);
}

TEST(DiscretizeStep, DimensionMismatchIsContractError)
{
  const auto sys = make_scalar_lq();
  EXPECT_THROW(discretize_step(*sys, vec({0, 0}), vec({1}), zero_signal(1)), ContractError);
  EXPECT_THROW(discretize_step(*sys, vec({0}), vec({1, 1}), zero_signal(1)), ContractError);
}

TEST(DiscretizeStep, DivergenceIsReported)
{
  const auto sys = blow_up_system();
  EXPECT_THROW(discretize_step(*sys, vec({1e200}), vec({0}), zero_signal(1)), IntegrationDiverged);
}

TEST(Rollout, ChainsSteps)
{
  const auto sys = make_scalar_lq(1.0, 1);
  const DisturbanceSequence w{{vec({0}), vec({0})}, DisturbanceHold::zero_order};
  const Trajectory t = rollout(*sys, vec({1.0}), std::vector<Vec>{vec({1}), vec({1})}, w);
  ASSERT_EQ(t.states.size(), 3u);
  EXPECT_DOUBLE_EQ(t.states[0][0], 1.0);
  EXPECT_DOUBLE_EQ(t.states[1][0], 2.0);
  EXPECT_DOUBLE_EQ(t.states[2][0], 3.0);
  EXPECT_EQ(t.stage_costs.size(), 2u);
}

TEST(Rollout, EmptyHorizon)
{
  const auto sys = test::default_halfcar();
  const Trajectory t = rollout(*sys, sys->equilibrium.x, std::vector<Vec>{}, DisturbanceSequence{});
  ASSERT_EQ(t.states.size(), 1u);
  EXPECT_EQ(t.states[0], sys->equilibrium.x);
  EXPECT_TRUE(t.controls.empty());
  EXPECT_TRUE(t.stage_costs.empty());
}

TEST(Rollout, HalfcarEquilibriumStaysPut)
{
  const auto sys = test::default_halfcar();
  const Vec U = sys->equilibrium.u.replicate(5, 1);
  const Trajectory t = rollout(*sys, sys->equilibrium.x, U, test::flat_road(6));
  for (double c : t.stage_costs) { EXPECT_LT(c, 1e-10); }
  for (const auto & x : t.states) { EXPECT_LE((x - sys->equilibrium.x).norm(), 1e-12); }
}

TEST(Rollout, RejectsShortOrMismatchedDisturbance)
{
  const auto sys = test::default_halfcar();
  const Vec U = sys->equilibrium.u.replicate(5, 1);
  EXPECT_THROW(rollout(*sys, sys->equilibrium.x, U, test::flat_road(5)), ContractError);
  DisturbanceSequence zoh{std::vector<Vec>(6, Vec::Zero(4)), DisturbanceHold::zero_order};
  EXPECT_THROW(rollout(*sys, sys->equilibrium.x, U, zoh), ContractError);
}

TEST(Rollout, BitwiseDeterministic)
{
  const auto sys = test::default_halfcar();
  const Vec U = test::vec({1.0, 4.0, 2.0, 0.5, 4.5, 4.5, 0.2, 3.0, 2.6, 1.1});
  const auto w = test::sine_road(6, 0.01, 1.3, 0.2);
  const Trajectory a = rollout(*sys, test::lifted(*sys), U, w);
  const Trajectory b = rollout(*sys, test::lifted(*sys), U, w);
  for (std::size_t k = 0; k < a.states.size(); ++k) { EXPECT_TRUE((a.states[k].array() == b.states[k].array()).all()); }
  EXPECT_EQ(a.stage_costs, b.stage_costs);
}

TEST(EvaluateCost, SumsStageCosts)
{
  Trajectory t;
  t.stage_costs = {1.0, 4.0};
  EXPECT_DOUBLE_EQ(evaluate_cost(t), 5.0);
  t.stage_costs = {0.0, 0.0, 0.0};
  EXPECT_DOUBLE_EQ(evaluate_cost(t), 0.0);
}

TEST(EvaluateCost, HalfcarMatchesIndependentQuadrature)
{
  // RK4 error scales with substep^4: about 4e-5 at 1 ms, below 1e-8 at 0.1 ms.
  const Vec U = test::vec({1.0, 4.0, 2.0, 0.5, 4.5, 4.5, 0.2, 3.0, 2.6, 1.1});
  const auto fine = test::default_halfcar(1000);
  EXPECT_LE(rel_err(evaluate_cost(rollout(*fine, test::lifted(*fine), U, test::flat_road(6))), kHorizonCost), 1e-8);
  const auto sys = test::default_halfcar();
  EXPECT_LE(rel_err(evaluate_cost(rollout(*sys, test::lifted(*sys), U, test::flat_road(6))), kHorizonCost), 1e-4);
}

TEST(EvaluateCost, QuadratureConsistency)
{
  const auto sys = test::default_halfcar();
  const Vec U = test::vec({1.0, 4.0, 2.0, 0.5, 4.5, 4.5, 0.2, 3.0, 2.6, 1.1});
  const auto w = test::sine_road(6, 0.01, 0.7, 0.2);
  const Vec x0 = test::lifted(*sys);
  const double direct = horizon_cost(*sys, x0, U, w);
  EXPECT_LE(rel_err(evaluate_cost(rollout(*sys, x0, U, w)), direct), 1e-12);

  const CachedHorizonCost cached(*sys, x0, U, w);
  EXPECT_EQ(cached.base_value(), direct);
  Vec V = U;
  V[7] = 1.9;
  EXPECT_EQ(cached(V), horizon_cost(*sys, x0, V, w));
  auto w2 = w;
  w2.samples[3][1] += 1e-3;
  Vec x1 = x0;
  EXPECT_EQ(cached(V, x1, w2), horizon_cost(*sys, x0, V, w2));
  x1[6] += 0.01;
  EXPECT_EQ(cached(V, x1, w2), horizon_cost(*sys, x1, V, w2));
}

TEST(Rk4, FourthOrderOnHalfcar)
{
  // Terminal error after one second of free motion against a 2560-step reference.
  const halfcar::HalfcarParams p;
  const Eigen::Vector2d u(1.5, 3.0);
  auto f = [&](double, const Vec & y, Vec & dy) { halfcar::derivative(y, u, Eigen::Vector4d::Zero(), p, dy); };
  const auto sys = test::default_halfcar();
  Vec y0 = test::lifted(*sys);
  y0[3] = 0.01;
  y0[4] = 0.2;
  const Vec ref = rk4_integrate(f, 0.0, 1.0, 2560, y0);
  std::vector<double> err;
  for (int steps : {160, 320, 640, 1280}) { err.push_back((rk4_integrate(f, 0.0, 1.0, steps, y0) - ref).norm()); }
  for (std::size_t i = 0; i + 1 < err.size(); ++i) { EXPECT_GE(err[i] / err[i + 1], 8.0) << "refinement " << i; }
}

TEST(Hermite, InterpolatesEndpointValuesAndRates)
{
  DisturbanceSequence seq{{vec({1.0, 0.5}), vec({2.0, -1.0})}, DisturbanceHold::hermite};
  const DisturbanceSegment seg(seq, 0, 0.1);
  Vec d;
  seg(0.0, d);
  EXPECT_NEAR(d[0], 1.0, 1e-15);
  EXPECT_NEAR(d[1], 0.5, 1e-12);
  seg(0.1, d);
  EXPECT_NEAR(d[0], 2.0, 1e-12);
  EXPECT_NEAR(d[1], -1.0, 1e-12);
  // rate is the derivative of the value
  Vec a, b;
  seg(0.05 + 1e-6, a);
  seg(0.05 - 1e-6, b);
  seg(0.05, d);
  EXPECT_NEAR((a[0] - b[0]) / 2e-6, d[1], 1e-6);
}

TEST(AdmissibleCheck, ClosedBoxMembership)
{
  const auto sys = test::default_halfcar();
  Trajectory t;
  t.states = {sys->equilibrium.x};
  t.controls = {vec({1.0, 2.0}), vec({3.0, 4.0})};
  EXPECT_TRUE(admissible_check(*sys, t).admissible);

  t.controls[1][0] = 0.2;
  EXPECT_TRUE(admissible_check(*sys, t).admissible);

  t.controls[1][1] = 5.0 + 1e-3;
  const auto rep = admissible_check(*sys, t);
  EXPECT_FALSE(rep.admissible);
  ASSERT_EQ(rep.violations.size(), 1u);
  EXPECT_EQ(rep.violations[0].kind, Violation::Kind::control);
  EXPECT_EQ(rep.violations[0].index, 1u);
  EXPECT_EQ(rep.violations[0].component, 1);
}

TEST(AdmissibleCheck, StateBox)
{
  auto sys = std::make_shared<ParametricSystem>(*make_scalar_lq());
  sys->bounds.state_lower = vec({-1});
  sys->bounds.state_upper = vec({1});
  Trajectory t;
  t.states = {vec({0.5}), vec({1.5})};
  t.controls = {vec({1.0})};
  const auto rep = admissible_check(*sys, t);
  ASSERT_EQ(rep.violations.size(), 1u);
  EXPECT_EQ(rep.violations[0].kind, Violation::Kind::state);
  EXPECT_EQ(rep.violations[0].index, 1u);
}

TEST(Bounds, RequireStrictOrder)
{
  Bounds b{vec({0.0, 1.0}), vec({1.0, 1.0}), std::nullopt, std::nullopt};
  EXPECT_THROW(b.validate(), ContractError);
  b.control_upper[1] = 2.0;
  EXPECT_NO_THROW(b.validate());
}
