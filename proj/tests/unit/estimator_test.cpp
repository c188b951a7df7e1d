#include <cmath>

#include <gtest/gtest.h>

#include "stochadj/error.hpp"
#include "stochadj/estimator.hpp"
#include "stochadj/oracle.hpp"
#include "stochadj/problems/coin_flip.hpp"
#include "stochadj/problems/sde.hpp"
#include "toy_models.hpp"

namespace stochadj {
namespace {

TEST(ReversePass, DeterministicChainGradient) {
  auto m = toy::chain(3);
  const LossSpec loss = toy::last_state_squared();
  const Eigen::VectorXd th = Eigen::VectorXd::Ones(1), x0 = Eigen::VectorXd::Zero(1);
  const GradEstimate g = reverse_pass(*m, loss, th, simulate(*m, loss, th, x0, 0));
  EXPECT_NEAR(g.pathwise[0], 18.0, 1e-12);
  EXPECT_TRUE(g.score_components.empty());
  EXPECT_NEAR(deterministic_adjoint(*m, loss, th, x0)[0], 18.0, 1e-12);
}

TEST(ReversePass, CoinFlipHeadsHeadsIsScoreOnly) {
  const Problem p = build_coin_flip();
  Trajectory rec;
  rec.x.assign(3, p.x0);
  rec.z.assign(3, Eigen::VectorXd());
  rec.y = {Eigen::VectorXd(), Eigen::VectorXd::Constant(1, kHeads), Eigen::VectorXd::Constant(1, kHeads)};
  const Trajectory t = replay(*p.model, p.loss, p.theta0.values(), rec);
  const GradEstimate g = reverse_pass(*p.model, p.loss, p.theta0.values(), t);
  EXPECT_EQ(t.objective, 2.0);
  EXPECT_LT(g.pathwise.cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LT((g.total() - Eigen::Vector2d(-2.0, 2.0)).cwiseAbs().maxCoeff(), 1e-12);
  ASSERT_EQ(g.score_components.size(), 2u);
  for (const ScoreComponent& c : g.score_components) EXPECT_EQ(c.weight, 2.0);
}

TEST(ReversePass, ScalarSdePathwiseGradient) {
  auto m = toy::scalar_sde(2, 1.0);
  const LossSpec loss = LossSpec::general([](const std::vector<Eigen::VectorXd>& x, std::vector<Eigen::VectorXd>* g) {
    if (g) g->back()[0] = 1.0;
    return x.back()[0];
  });
  const Eigen::VectorXd g = deterministic_adjoint(*m, loss, Eigen::Vector2d(0.0, 0.0), Eigen::VectorXd::Ones(1), 3);
  EXPECT_NEAR(g[0], 2.0, 1e-12);
}

TEST(ReversePass, LossOnFirstStepOnlyUsesFirstStep) {
  auto m = toy::chain(4);
  const LossSpec loss = LossSpec::general([](const std::vector<Eigen::VectorXd>& x, std::vector<Eigen::VectorXd>* g) {
    if (g) (*g)[1][0] = 2.0 * x[1][0];
    return x[1][0] * x[1][0];
  });
  EXPECT_NEAR(deterministic_adjoint(*m, loss, Eigen::VectorXd::Constant(1, 1.5), Eigen::VectorXd::Zero(1))[0], 3.0, 1e-12);
}

TEST(ReversePass, LaggedWindowMatchesAugmentedState) {
  auto lagged = toy::ar2_lagged(15);
  auto augmented = toy::ar2_augmented(15);
  const LossSpec loss = toy::first_coordinate_sum();
  const Eigen::VectorXd th = Eigen::Vector3d(0.6, -0.3, 0.4);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Eigen::VectorXd a = deterministic_adjoint(*lagged, loss, th, Eigen::VectorXd::Constant(1, 0.7), seed);
    const Eigen::VectorXd b = deterministic_adjoint(*augmented, loss, th, Eigen::Vector2d(0.7, 0.7), seed);
    EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(EstimateGradient, CoinFlipMeanIsUnbiased) {
  const Problem p = build_coin_flip();
  const BatchEstimate b = estimate_gradient(*p.model, p.loss, p.theta0.values(), p.x0, 100000, 1);
  Eigen::VectorXd var = Eigen::VectorXd::Zero(2);
  for (const GradEstimate& s : b.samples) var += (s.total() - b.mean_gradient).cwiseAbs2();
  const Eigen::VectorXd se = (var / (b.samples.size() - 1.0) / b.samples.size()).cwiseSqrt();
  EXPECT_LT(std::abs(b.mean_gradient[0] + 0.25), 4 * se[0]);
  EXPECT_LT(std::abs(b.mean_gradient[1] - 0.25), 4 * se[1]);
  EXPECT_NEAR(b.mean_objective, 2.75, 4 * std::sqrt(1.6875 / 100000));
}

TEST(EstimateGradient, BatchOfOneIsOneReversePass) {
  const Problem p = build_sde(default_sde_config(SdeVariant::kScore));
  const BatchEstimate b = estimate_gradient(*p.model, p.loss, p.theta0.values(), p.x0, 1, 21);
  const Trajectory t = simulate(*p.model, p.loss, p.theta0.values(), p.x0, derive_seed(21, 0));
  EXPECT_EQ(b.mean_gradient, reverse_pass(*p.model, p.loss, p.theta0.values(), t).total());
}

TEST(EstimateGradient, ThreadCountDoesNotChangeResult) {
  const Problem p = build_sde(default_sde_config(SdeVariant::kJump));
  const BatchEstimate a = estimate_gradient(*p.model, p.loss, p.theta0.values(), p.x0, 200, 4, 1);
  const BatchEstimate b = estimate_gradient(*p.model, p.loss, p.theta0.values(), p.x0, 200, 4, 3);
  EXPECT_EQ(a.mean_gradient, b.mean_gradient);
  EXPECT_EQ(a.mean_objective, b.mean_objective);
}

TEST(EstimateGradient, ThetaFreeModelGivesZero) {
  auto m = std::make_shared<TapeStepModel>(
      ModelShape{5, 1, 1, 2, false, true},
      [](Tape&, int, const std::vector<VarVec>& lags, const VarVec&, const Eigen::VectorXd&, const Eigen::VectorXd& z) {
        return TapeStep{{lags[0][0] + z[0]}, std::nullopt};
      },
      [](const StepInput&, Rng& rng) { return StepDraw{Eigen::VectorXd::Constant(1, rng.normal()), {}}; });
  const BatchEstimate b = estimate_gradient(*m, toy::first_coordinate_sum(), Eigen::Vector2d(1, 2),
                                            Eigen::VectorXd::Zero(1), 50, 2);
  EXPECT_EQ(b.mean_gradient, Eigen::VectorXd::Zero(2));
}

TEST(EstimateGradient, RejectsEmptyBatch) {
  const Problem p = build_coin_flip();
  EXPECT_THROW(estimate_gradient(*p.model, p.loss, p.theta0.values(), p.x0, 0, 1), ValidationError);
  EXPECT_THROW(deterministic_adjoint(*p.model, p.loss, p.theta0.values(), p.x0), ValidationError);
}

// Tail-sum weights and a single total weight give the same expectation.
TEST(EstimateGradient, SummableWeightingKeepsTheExpectation) {
  SdeConfig c = default_sde_config(SdeVariant::kJump);
  c.steps = 3;
  const Problem p = build_sde(c);
  const LossSpec summed = p.loss;
  const LossSpec general = LossSpec::general([summed](const std::vector<Eigen::VectorXd>& x,
                                                      std::vector<Eigen::VectorXd>* g) {
    if (g) *g = summed.gradient(x);
    return summed.evaluate(x, nullptr);
  });
  const EnumerationReport a = enumerate(*p.model, summed, p.theta0.values(), p.x0);
  const EnumerationReport b = enumerate(*p.model, general, p.theta0.values(), p.x0);
  EXPECT_LT((a.expected_gradient - b.expected_gradient).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(FiniteDifference, Examples) {
  const Eigen::VectorXd g = finite_difference_gradient(
      [](const Eigen::VectorXd& t) { return t[0] * t[0]; }, Eigen::VectorXd::Constant(1, 3.0), 1e-5);
  EXPECT_NEAR(g[0], 6.0, 1e-8);
  const Eigen::VectorXd ones = finite_difference_gradient(
      [](const Eigen::VectorXd& t) { return t.sum(); }, Eigen::Vector3d(0.3, -7.0, 2.0), 1e-3);
  EXPECT_LT((ones - Eigen::Vector3d::Ones()).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_THROW(finite_difference_gradient([](const Eigen::VectorXd&) { return 0.0; }, ones, 0.0), ValidationError);
  EXPECT_THROW(finite_difference_gradient([](const Eigen::VectorXd&) { return NAN; }, ones, 0.1), NumericalError);
}

TEST(AdjointWindow, RingReusesSlots) {
  AdjointWindow w(2, 1);
  w.at(5)[0] = 1.0;
  w.at(4)[0] = 2.0;
  EXPECT_EQ(w.take(5)[0], 1.0);
  EXPECT_EQ(w.at(2)[0], 0.0);
}

}  // namespace
}  // namespace stochadj
