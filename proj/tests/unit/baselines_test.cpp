#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "stochadj/baselines.hpp"
#include "stochadj/error.hpp"
#include "stochadj/oracle.hpp"
#include "stochadj/problems/bandit.hpp"
#include "stochadj/problems/coin_flip.hpp"

namespace stochadj {
namespace {

Trajectory coin_path(const Problem& p, int first, int second) {
  Trajectory rec;
  rec.x.assign(3, p.x0);
  rec.z.assign(3, Eigen::VectorXd());
  rec.y = {Eigen::VectorXd(), Eigen::VectorXd::Constant(1, first), Eigen::VectorXd::Constant(1, second)};
  return replay(*p.model, p.loss, p.theta0.values(), rec);
}

BaselineState value_table(double b1, double b_tails, double b_heads) {
  BaselineState s = BaselineState::value(coin_flip_keys(), 2, 0.01);
  s.numer().col(0) = Eigen::Vector3d(b1, b_tails, b_heads);
  return s;
}

// One score component with weight `f` and score `s` on a single-step path.
struct SingleObservation {
  Trajectory traj;
  GradEstimate est;
  ConditioningKey keys = ConditioningKey::table(1, [](const PathPrefix&) { return 0; });

  SingleObservation(double f, Eigen::VectorXd s) {
    traj.x.assign(2, Eigen::VectorXd::Zero(1));
    traj.y.assign(2, Eigen::VectorXd::Zero(1));
    traj.z.assign(2, Eigen::VectorXd());
    est.pathwise = Eigen::VectorXd::Zero(s.size());
    est.score_components.push_back({1, f, std::move(s)});
  }
};

TEST(ApplyBaseline, OptimalMakesEveryCoinPathEqual) {
  const Problem p = build_coin_flip();
  const BaselineState opt = exact_optimal_baselines(*p.model, p.loss, p.theta0.values(), p.x0, coin_flip_keys(), false);
  EXPECT_NEAR(opt.beta_at_key(0).beta[0], 1.5, 1e-12);
  EXPECT_NEAR(opt.beta_at_key(1).beta[0], 1.0, 1e-12);
  EXPECT_NEAR(opt.beta_at_key(2).beta[0], 2.0, 1e-12);
  for (int a = 0; a < 2; ++a) {
    for (int b = 0; b < 2; ++b) {
      const Trajectory t = coin_path(p, a, b);
      const GradEstimate est = reverse_pass(*p.model, p.loss, p.theta0.values(), t);
      const Eigen::VectorXd g = apply_baseline(est, opt, coin_flip_keys(), t).gradient;
      EXPECT_LT((g - Eigen::Vector2d(-0.25, 0.25)).cwiseAbs().maxCoeff(), 1e-12) << a << b;
    }
  }
}

TEST(ApplyBaseline, NoneLeavesTheEstimateAlone) {
  const Problem p = build_coin_flip();
  const Trajectory t = coin_path(p, 1, 0);
  const GradEstimate est = reverse_pass(*p.model, p.loss, p.theta0.values(), t);
  EXPECT_EQ(apply_baseline(est, BaselineState::none(2), coin_flip_keys(), t).gradient, est.total());
}

TEST(ApplyBaseline, ValueTableOnTailsTails) {
  const Problem p = build_coin_flip();
  const Trajectory t = coin_path(p, kTails, kTails);
  const GradEstimate est = reverse_pass(*p.model, p.loss, p.theta0.values(), t);
  const Eigen::VectorXd g = apply_baseline(est, value_table(2.75, 2.5, 3.0), coin_flip_keys(), t).gradient;
  EXPECT_LT((g - Eigen::Vector2d(-1.625, 1.625)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(ApplyBaseline, ColdStartKeyGivesZeroBeta) {
  SingleObservation o(2.0, Eigen::VectorXd::Ones(1));
  BaselineState s = BaselineState::value(ConditioningKey::table(1, [](const PathPrefix&) { return 0; }), 1, 0.1);
  s.numer()(0, 0) = 1.0;
  const ConditioningKey outside = ConditioningKey::table(1, [](const PathPrefix&) { return 5; });
  const BaselinedGradient g = apply_baseline(o.est, s, outside, o.traj);
  EXPECT_TRUE(g.cold_start);
  EXPECT_EQ(g.gradient[0], 2.0);
  EXPECT_THROW(apply_baseline(o.est, BaselineState::none(3), o.keys, o.traj), ValidationError);
}

TEST(PathPrefix, RefusesFutureInformation) {
  const Problem p = build_coin_flip();
  const Trajectory t = coin_path(p, 0, 1);
  const PathPrefix prefix(t, 2);
  EXPECT_EQ(prefix.y(1)[0], 0.0);
  EXPECT_THROW(prefix.y(2), ValidationError);
  EXPECT_THROW(prefix.x(2), ValidationError);
}

TEST(UpdateValue, SingleKeyPlugIn) {
  SingleObservation o(5.0, Eigen::VectorXd::Ones(1));
  BaselineState s = BaselineState::value(o.keys, 1, 0.1);
  s.numer()(0, 0) = 3.0;
  const Eigen::VectorXd g = update_value_baseline(s, o.est, o.keys, o.traj);
  EXPECT_NEAR(g[0], -4.0, 1e-15);
  EXPECT_NEAR(s.numer()(0, 0), 3.4, 1e-15);
  EXPECT_THROW(update_c_optimal(s, o.est, o.keys, o.traj), ValidationError);
}

TEST(UpdateValue, ExactConditionalMeanIsStationary) {
  const Problem p = build_coin_flip();
  const EnumerationReport r = enumerate(*p.model, p.loss, p.theta0.values(), p.x0);
  // E[F | key]: 2.75 overall, 2.5 after tails, 3 after heads.
  const BaselineState exact = value_table(2.75, 2.5, 3.0);
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(3);
  for (const EnumeratedPath& path : r.paths) {
    BaselineState s = exact;
    mean += path.probability * update_value_baseline(s, path.estimate, coin_flip_keys(), path.trajectory);
  }
  EXPECT_LT(mean.cwiseAbs().maxCoeff(), 1e-12);
}

TEST(UpdateCOptimal, PlugInAndRatio) {
  SingleObservation o(5.0, Eigen::VectorXd::Ones(1));
  BaselineState s = BaselineState::c_optimal(o.keys, 1, 0.1, false);
  s.numer()(0, 0) = 3.0;
  s.denom()(0, 0) = 1.0;
  const Eigen::VectorXd g = update_c_optimal(s, o.est, o.keys, o.traj);
  EXPECT_NEAR(g[0], -4.0, 1e-15);
  EXPECT_NEAR(g[1], 0.0, 1e-15);
  EXPECT_NEAR(s.beta_at_key(0).beta[0], 3.4, 1e-15);
}

TEST(UpdateCOptimal, FloorGivesZeroBeta) {
  const ConditioningKey keys = ConditioningKey::table(1, [](const PathPrefix&) { return 0; });
  BaselineState s = BaselineState::c_optimal(keys, 2, 0.1, true);
  SingleObservation o(5.0, Eigen::Vector2d(1.0, 0.0));
  for (int k = 0; k < 10; ++k) update_per_parameter(s, o.est, keys, o.traj);
  const BetaEval b = s.beta_at_key(0);
  EXPECT_TRUE(b.floored);
  EXPECT_EQ(b.beta[1], 0.0);
  EXPECT_GT(b.beta[0], 0.0);
}

TEST(UpdateCOptimal, PerParameterMatchesScalarOnCoinFlip) {
  const Problem p = build_coin_flip();
  const BaselineState scalar = exact_optimal_baselines(*p.model, p.loss, p.theta0.values(), p.x0, coin_flip_keys(), false);
  const BaselineState per = exact_optimal_baselines(*p.model, p.loss, p.theta0.values(), p.x0, coin_flip_keys(), true);
  for (int k = 0; k < 3; ++k) {
    const double b = scalar.beta_at_key(k).beta[0];
    EXPECT_LT((per.beta_at_key(k).beta - Eigen::Vector2d::Constant(b)).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(UpdateCOptimal, RunningMeanReachesExactValues) {
  const Problem p = build_coin_flip();
  const ConditioningKey keys = coin_flip_keys();
  BaselineState s = BaselineState::c_optimal(keys, 2, 0.01, false, UpdateRule::kRunningMean);
  const BatchEstimate b = estimate_gradient(*p.model, p.loss, p.theta0.values(), p.x0, 40000, 3);
  for (std::size_t k = 0; k < b.samples.size(); ++k) {
    const Trajectory t = simulate(*p.model, p.loss, p.theta0.values(), p.x0, derive_seed(3, k));
    update_c_optimal(s, b.samples[k], keys, t);
  }
  EXPECT_NEAR(s.beta_at_key(0).beta[0], 1.5, 0.05);
  EXPECT_NEAR(s.beta_at_key(1).beta[0], 1.0, 0.05);
  EXPECT_NEAR(s.beta_at_key(2).beta[0], 2.0, 0.05);
}

TEST(UpdateDirect, ZeroBetaPlugIn) {
  const Problem p = build_coin_flip();
  const ConditioningKey keys = coin_flip_keys();
  const Trajectory t = coin_path(p, kTails, kTails);
  const GradEstimate est = reverse_pass(*p.model, p.loss, p.theta0.values(), t);
  BaselineState s = BaselineState::direct(keys, 2, 0.01);
  const Eigen::VectorXd g = update_direct(s, est, keys, t);
  const Eigen::VectorXd ghat = est.total();
  EXPECT_NEAR(g[0], -2.0 * ghat.dot(est.score_components[0].score), 1e-12);
  EXPECT_NEAR(g[1], -2.0 * ghat.dot(est.score_components[1].score), 1e-12);
  EXPECT_EQ(g[2], 0.0);
}

TEST(UpdateDirect, ExactOptimalIsStationary) {
  const Problem p = build_coin_flip();
  const ConditioningKey keys = coin_flip_keys();
  const EnumerationReport r = enumerate(*p.model, p.loss, p.theta0.values(), p.x0);
  BaselineState opt = BaselineState::direct(keys, 2, 0.01);
  opt.numer().col(0) = Eigen::Vector3d(1.5, 1.0, 2.0);
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(3);
  for (const EnumeratedPath& path : r.paths) {
    BaselineState s = opt;
    mean += path.probability * update_direct(s, path.estimate, keys, path.trajectory);
  }
  EXPECT_LT(mean.cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Returns, Examples) {
  const std::vector<double> f = {0.0, 1.0, 1.0};
  const std::vector<double> v = {0.0, 0.5, 0.0};
  EXPECT_NEAR(compute_returns(f, v, {1.0, 0.0, ReturnMode::kGae})[1], 1.5, 1e-15);
  EXPECT_NEAR(compute_returns(f, v, {1.0, 1.0, ReturnMode::kGae})[1], 2.0, 1e-15);
  for (ReturnMode mode : {ReturnMode::kDiscounted, ReturnMode::kBootstrap, ReturnMode::kGae}) {
    const std::vector<double> r = compute_returns(f, v, {0.0, 0.5, mode});
    EXPECT_EQ(r[1], 1.0);
    EXPECT_EQ(r[2], 1.0);
  }
  EXPECT_THROW(compute_returns(f, {}, {1.0, 0.5, ReturnMode::kBootstrap}), ValidationError);
  EXPECT_THROW(compute_returns(f, v, {1.5, 0.5, ReturnMode::kDiscounted}), ValidationError);
  EXPECT_THROW(parse_return_mode("sideways"), ValidationError);
}

TEST(Returns, GaeEndpointsOnRandomPaths) {
  std::mt19937_64 gen(13);
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const int steps = 1 + trial % 12;
    std::vector<double> f(steps + 1, 0.0), v(steps + 1, 0.0);
    for (int i = 1; i <= steps; ++i) {
      f[i] = n(gen);
      v[i] = i < steps ? n(gen) : 0.0;
    }
    const double gamma = u(gen);
    const auto gae0 = compute_returns(f, v, {gamma, 0.0, ReturnMode::kGae});
    const auto boot = compute_returns(f, v, {gamma, 0.0, ReturnMode::kBootstrap});
    const auto gae1 = compute_returns(f, v, {gamma, 1.0, ReturnMode::kGae});
    const auto disc = compute_returns(f, v, {gamma, 1.0, ReturnMode::kDiscounted});
    for (int i = 1; i <= steps; ++i) {
      EXPECT_NEAR(gae0[i], boot[i], 1e-12);
      EXPECT_NEAR(gae1[i], disc[i], 1e-12);
    }
  }
}

TEST(Variance, CoinFlipExactValues) {
  const Problem p = build_coin_flip();
  const ConditioningKey keys = coin_flip_keys();
  const EnumerationReport r = enumerate(*p.model, p.loss, p.theta0.values(), p.x0);
  EXPECT_NEAR(r.variance, 2.375, 1e-12);
  const BaselineState opt = exact_baseline(r, keys, ExactBaseline::kOptimal);
  EXPECT_LE(with_baseline(r, opt, keys).variance, 1e-24);
  EXPECT_NEAR(with_baseline(r, value_table(2.75, 2.5, 3.0), keys).variance, 1.59375, 1e-12);
}

TEST(Variance, BaselinesNeverShiftTheMean) {
  const Problem p = build_coin_flip();
  const ConditioningKey keys = coin_flip_keys();
  const EnumerationReport r = enumerate(*p.model, p.loss, Eigen::Vector2d(0.3, -0.8), p.x0);
  std::mt19937_64 gen(2);
  std::normal_distribution<double> n(0.0, 3.0);
  for (int trial = 0; trial < 20; ++trial) {
    const BaselineState s = value_table(n(gen), n(gen), n(gen));
    const EnumerationReport b = with_baseline(r, s, keys);
    EXPECT_LT((b.expected_gradient - r.expected_gradient).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Variance, BanditOrdering) {
  const Problem p = build_bandit();
  const ConditioningKey keys = constant_key();
  const EnumerationReport r = enumerate(*p.model, p.loss, p.theta0.values(), p.x0);
  const double none = r.variance;
  const double value = with_baseline(r, exact_baseline(r, keys, ExactBaseline::kValue), keys).variance;
  const double scalar = with_baseline(r, exact_baseline(r, keys, ExactBaseline::kOptimal), keys).variance;
  const double per = with_baseline(r, exact_baseline(r, keys, ExactBaseline::kOptimalPerParam), keys).variance;
  // Values from an independent closed-form computation.
  EXPECT_NEAR(none, 0.19605716801338427, 1e-12);
  EXPECT_NEAR(value, 0.07544916456437366, 1e-12);
  EXPECT_NEAR(scalar, 0.01861200311940623, 1e-12);
  EXPECT_NEAR(per, 0.008081393844820591, 1e-12);
  EXPECT_LT(per, scalar);
  EXPECT_LT(scalar, value);
  EXPECT_LT(value, none);
}

TEST(Variance, SampleEstimator) {
  std::vector<Eigen::VectorXd> s = {Eigen::Vector2d(1, 0), Eigen::Vector2d(-1, 0)};
  EXPECT_NEAR(estimator_variance(s).variance, 1.0, 1e-15);
  EXPECT_THROW(estimator_variance({Eigen::Vector2d(1, 0)}), ValidationError);
  EXPECT_NEAR(exact_variance(s, {0.5, 0.5}), 1.0, 1e-15);
  EXPECT_THROW(exact_variance(s, {1.0}), ValidationError);
}

TEST(BaselineState, ParameterRoundTripAndKinds) {
  const ConditioningKey keys = coin_flip_keys();
  BaselineState s = BaselineState::c_optimal(keys, 2, 0.1, true);
  Eigen::VectorXd phi = Eigen::VectorXd::LinSpaced(s.parameters().size(), 1, 12);
  s.set_parameters(phi);
  EXPECT_EQ(s.parameters(), phi);
  EXPECT_THROW(s.set_parameters(Eigen::VectorXd::Ones(3)), ValidationError);
  EXPECT_THROW(BaselineState::value(keys, 2, 0.0), ValidationError);
  EXPECT_EQ(parse_baseline_kind(baseline_kind_name(BaselineKind::kDirect)), BaselineKind::kDirect);
  EXPECT_THROW(parse_baseline_kind("psychic"), ValidationError);
}

}  // namespace
}  // namespace stochadj
