#include <cmath>

#include <gtest/gtest.h>

#include "stochadj/error.hpp"
#include "stochadj/model.hpp"
#include "stochadj/problems/coin_flip.hpp"
#include "stochadj/problems/piecewise_ode.hpp"
#include "stochadj/problems/sde.hpp"
#include "toy_models.hpp"

namespace stochadj {
namespace {

TEST(Simulate, DeterministicChain) {
  auto m = toy::chain(3);
  const Trajectory t = simulate(*m, toy::last_state_squared(), Eigen::VectorXd::Ones(1), Eigen::VectorXd::Zero(1), 1);
  ASSERT_EQ(t.steps(), 3);
  EXPECT_EQ(t.x[1][0], 1.0);
  EXPECT_EQ(t.x[2][0], 2.0);
  EXPECT_EQ(t.x[3][0], 3.0);
  EXPECT_EQ(t.objective, 9.0);
  for (int i = 1; i <= 3; ++i) {
    EXPECT_EQ(t.y[i].size(), 0);
    EXPECT_TRUE(std::isnan(t.logp[i]));
  }
}

TEST(Simulate, CoinFlipOutcomesAndPayoffs) {
  const Problem p = build_coin_flip();
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const Trajectory t = simulate(*p.model, p.loss, p.theta0.values(), p.x0, seed);
    for (int i = 1; i <= 2; ++i) {
      EXPECT_TRUE(t.y[i][0] == kTails || t.y[i][0] == kHeads);
      EXPECT_NEAR(t.logp[i], std::log(0.5), 1e-15);
    }
    EXPECT_TRUE(t.objective == 1.0 || t.objective == 2.0 || t.objective == 4.0);
  }
}

TEST(Simulate, DriftlessUnitDiffusionIsARandomWalk) {
  SdeConfig c = default_sde_config(SdeVariant::kPathwise);
  c.steps = 20;
  c.drift = {Eigen::MatrixXd::Zero(2, 2)};
  c.offset = Eigen::Vector2d::Zero();
  c.diffusion = Eigen::MatrixXd::Zero(2, 2);  // log-diagonal 0, so A = I
  const Problem p = build_sde(c);
  const Trajectory t = simulate(*p.model, p.loss, p.theta0.values(), p.x0, 9);
  Eigen::VectorXd walk = p.x0;
  for (int i = 1; i <= c.steps; ++i) walk += t.z[i];
  EXPECT_LT((t.x.back() - walk).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Simulate, SameSeedSameTrajectory) {
  const Problem p = build_sde(default_sde_config(SdeVariant::kJump));
  const Trajectory a = simulate(*p.model, p.loss, p.theta0.values(), p.x0, 5);
  const Trajectory b = simulate(*p.model, p.loss, p.theta0.values(), p.x0, 5);
  for (int i = 0; i <= a.steps(); ++i) EXPECT_EQ(a.x[i], b.x[i]);
  EXPECT_EQ(a.objective, b.objective);
  EXPECT_EQ(simulate_objective(*p.model, p.loss, p.theta0.values(), p.x0, 5), a.objective);
}

TEST(Simulate, SummableTotalEqualsStepSum) {
  const Problem p = build_sde(default_sde_config(SdeVariant::kScore));
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Trajectory t = simulate(*p.model, p.loss, p.theta0.values(), p.x0, seed);
    double sum = 0.0;
    for (int i = 1; i <= t.steps(); ++i) sum += t.step_losses[i];
    EXPECT_NEAR(t.objective, sum, 1e-12);
  }
}

TEST(Simulate, Errors) {
  auto m = toy::chain(3);
  EXPECT_THROW(simulate(*m, toy::last_state_squared(), Eigen::VectorXd::Ones(2), Eigen::VectorXd::Zero(1), 1),
               ValidationError);
  EXPECT_THROW(simulate(*m, toy::last_state_squared(), Eigen::VectorXd::Ones(1), Eigen::VectorXd::Zero(2), 1),
               ValidationError);
  EXPECT_THROW(simulate(*m, toy::last_state_squared(), Eigen::VectorXd::Constant(1, NAN), Eigen::VectorXd::Zero(1), 1),
               NumericalError);
  auto blowup = toy::scalar_sde(2000, 1.0);
  EXPECT_THROW(simulate(*blowup, toy::last_state_squared(), Eigen::Vector2d(10.0, 0.0), Eigen::VectorXd::Ones(1), 1),
               NumericalError);
}

TEST(Replay, SameThetaIsBitIdentical) {
  const Problem p = build_sde(default_sde_config(SdeVariant::kPathwise));
  const Trajectory a = simulate(*p.model, p.loss, p.theta0.values(), p.x0, 3);
  const Trajectory b = replay(*p.model, p.loss, p.theta0.values(), a);
  for (int i = 0; i <= a.steps(); ++i) EXPECT_EQ(a.x[i], b.x[i]);
  EXPECT_EQ(a.objective, b.objective);
}

TEST(Replay, PiecewiseSlowStepsShiftByDelta) {
  const Problem p = build_piecewise_ode(default_piecewise_scenario());
  const Eigen::VectorXd th = Eigen::Vector3d(1.8, 0.3, 0.5);
  const Trajectory a = simulate(*p.model, p.loss, th, p.x0, 4);
  const double delta = 0.01;
  Eigen::VectorXd moved = th;
  moved[1] += delta;
  const Trajectory b = replay(*p.model, p.loss, moved, a);
  int slow = 0;
  for (int i = 1; i <= a.steps(); ++i) {
    if (a.y[i][0] == kSlowBranch) ++slow;
    EXPECT_EQ(a.y[i], b.y[i]);
    EXPECT_NEAR(b.x[i][0] - a.x[i][0], slow * delta, 1e-12);
  }
  EXPECT_GT(slow, 0);
}

TEST(Replay, CoinFlipObjectiveIgnoresTheta) {
  const Problem p = build_coin_flip();
  const Trajectory a = simulate(*p.model, p.loss, p.theta0.values(), p.x0, 8);
  const Trajectory b = replay(*p.model, p.loss, Eigen::Vector2d(-0.4, 2.2), a);
  EXPECT_EQ(a.objective, b.objective);
  EXPECT_NE(a.logp[1], b.logp[1]);
}

TEST(Replay, RejectsMismatchedTrajectory) {
  const Problem p = build_coin_flip();
  const Trajectory a = simulate(*p.model, p.loss, p.theta0.values(), p.x0, 8);
  auto m = toy::chain(3);
  EXPECT_THROW(replay(*m, toy::last_state_squared(), Eigen::VectorXd::Ones(1), a), ValidationError);
}

TEST(StateWindow, PadsWithInitialState) {
  std::vector<Eigen::VectorXd> xs = {Eigen::VectorXd::Constant(1, 7.0), Eigen::VectorXd::Constant(1, 8.0)};
  const StateWindow w(xs, 1, 3);
  EXPECT_EQ(w.lag(1)[0], 7.0);
  EXPECT_EQ(w.lag(3)[0], 7.0);
  const StateWindow w2(xs, 2, 2);
  EXPECT_EQ(w2.lag(1)[0], 8.0);
  EXPECT_EQ(w2.lag(2)[0], 7.0);
}

TEST(ParamVector, SlicesAndNames) {
  const ParamVector v(Eigen::Vector3d(1, 2, 3), {{"a", 0, 1}, {"b", 1, 2}});
  EXPECT_EQ(v.slice("b"), Eigen::Vector2d(2, 3));
  EXPECT_EQ(v.coordinate_name(0), "a");
  EXPECT_EQ(v.coordinate_name(2), "b[1]");
  EXPECT_THROW(v.slice("c"), ValidationError);
  EXPECT_THROW(ParamVector(Eigen::Vector3d(1, 2, 3), {{"a", 0, 1}}), ValidationError);
  EXPECT_THROW(ParamVector(Eigen::Vector2d(1, NAN), {{"a", 0, 2}}), ValidationError);
}

}  // namespace
}  // namespace stochadj
