#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "stochadj/distributions.hpp"
#include "stochadj/error.hpp"
#include "stochadj/rng.hpp"
#include "twins.hpp"

namespace stochadj {
namespace {

TEST(Categorical, SampleInvertsCumulativeSoftmax) {
  EXPECT_EQ(categorical_sample(Eigen::Vector2d(1, 1), 0.25), 0);
  EXPECT_EQ(categorical_sample(Eigen::Vector2d(1, 1), 0.75), 1);
  EXPECT_EQ(categorical_sample(Eigen::Vector3d(3, 2, 1), 0.9), 1);
  EXPECT_EQ(categorical_sample(Eigen::Vector3d(3, 2, 1), 0.95), 2);
  EXPECT_THROW(categorical_sample(Eigen::Vector2d(1, 1), 1.0), ValidationError);
  EXPECT_THROW(categorical_sample(Eigen::Vector2d(1, NAN), 0.5), NumericalError);
}

TEST(Categorical, SweepReproducesProbabilities) {
  const Eigen::Vector3d logits(0.3, -1.0, 1.2);
  const Eigen::VectorXd p = softmax(logits);
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(3);
  const int n = 1000000;
  for (int i = 0; i < n; ++i) counts[categorical_sample(logits, (i + 0.5) / n)] += 1.0;
  EXPECT_LT((counts / n - p).cwiseAbs().maxCoeff(), 1e-5);
}

TEST(Categorical, ScoreExamples) {
  const CategoricalScore heads = categorical_score(Eigen::Vector2d(1, 1), 1);
  EXPECT_NEAR(heads.logpmf, -0.693147, 1e-6);
  EXPECT_NEAR(heads.d_logits[0], -0.5, 1e-15);
  EXPECT_NEAR(heads.d_logits[1], 0.5, 1e-15);
  const CategoricalScore tails = categorical_score(Eigen::Vector2d(1, 1), 0);
  EXPECT_NEAR(tails.d_logits[0], 0.5, 1e-15);
  EXPECT_THROW(categorical_score(Eigen::Vector2d(1, 1), 2), ValidationError);
}

TEST(Categorical, ScoreHasZeroMean) {
  std::mt19937_64 gen(3);
  std::normal_distribution<double> n(0.0, 2.0);
  for (int trial = 0; trial < 50; ++trial) {
    Eigen::VectorXd logits(4);
    for (int j = 0; j < 4; ++j) logits[j] = n(gen);
    const Eigen::VectorXd p = softmax(logits);
    EXPECT_NEAR(p.sum(), 1.0, 1e-12);
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(4);
    for (int k = 0; k < 4; ++k) mean += p[k] * categorical_score(logits, k).d_logits;
    EXPECT_LT(mean.cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Normal, Examples) {
  EXPECT_NEAR(normal_logpdf({0, 1}, 0).value, -0.918939, 1e-6);
  EXPECT_NEAR(normal_logpdf({0, 1}, 1).d_mean, 1.0, 1e-15);
  EXPECT_NEAR(normal_logpdf({2, 3}, 2).d_stddev, -1.0 / 3.0, 1e-15);
  EXPECT_THROW(normal_logpdf({0, 0}, 1), ValidationError);
  EXPECT_THROW(normal_sample({0, -1}, 0.5), ValidationError);
}

TEST(Normal, PartialsMatchFiniteDifferences) {
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> u(-2, 2);
  const double h = 1e-6;
  for (int trial = 0; trial < 100; ++trial) {
    const double mu = u(gen), sd = 0.5 + std::abs(u(gen)), y = u(gen);
    const NormalLogpdf r = normal_logpdf({mu, sd}, y);
    const double fd_mu = (normal_logpdf({mu + h, sd}, y).value - normal_logpdf({mu - h, sd}, y).value) / (2 * h);
    const double fd_sd = (normal_logpdf({mu, sd + h}, y).value - normal_logpdf({mu, sd - h}, y).value) / (2 * h);
    const double fd_y = (normal_logpdf({mu, sd}, y + h).value - normal_logpdf({mu, sd}, y - h).value) / (2 * h);
    EXPECT_NEAR(r.d_mean, fd_mu, 1e-5 * std::max(1.0, std::abs(fd_mu)));
    EXPECT_NEAR(r.d_stddev, fd_sd, 1e-5 * std::max(1.0, std::abs(fd_sd)));
    EXPECT_NEAR(r.d_y, fd_y, 1e-5 * std::max(1.0, std::abs(fd_y)));
  }
}

TEST(Normal, ScoreMeanIsZeroByMonteCarlo) {
  Rng rng(17);
  const NormalParams p{0.7, 1.3};
  const int n = 100000;
  double s_mu = 0, s_mu2 = 0, s_sd = 0, s_sd2 = 0;
  for (int i = 0; i < n; ++i) {
    const NormalLogpdf r = normal_logpdf(p, normal_sample(p, rng.uniform()));
    s_mu += r.d_mean;
    s_mu2 += r.d_mean * r.d_mean;
    s_sd += r.d_stddev;
    s_sd2 += r.d_stddev * r.d_stddev;
  }
  const double se_mu = std::sqrt((s_mu2 / n - std::pow(s_mu / n, 2)) / n);
  const double se_sd = std::sqrt((s_sd2 / n - std::pow(s_sd / n, 2)) / n);
  EXPECT_LT(std::abs(s_mu / n), 4 * se_mu);
  EXPECT_LT(std::abs(s_sd / n), 4 * se_sd);
}

TEST(MvNormal, Examples) {
  MvNormalCholesky d{Eigen::Vector2d::Zero(), Eigen::Matrix2d::Zero()};
  EXPECT_NEAR(mvnormal_logpdf(d, Eigen::Vector2d::Zero()).value, -1.837877, 1e-6);

  MvNormalCholesky one{Eigen::VectorXd::Constant(1, 0.4), Eigen::MatrixXd::Constant(1, 1, std::log(1.7))};
  const Eigen::VectorXd y = Eigen::VectorXd::Constant(1, -0.3);
  const MvNormalLogpdf m = mvnormal_logpdf(one, y);
  const NormalLogpdf n = normal_logpdf({0.4, 1.7}, -0.3);
  EXPECT_NEAR(m.value, n.value, 1e-14);
  EXPECT_NEAR(m.d_mean[0], n.d_mean, 1e-14);
  // Stored diagonal is log(sd), so its partial is sd * d/dsd.
  EXPECT_NEAR(m.d_factor_params(0, 0), 1.7 * n.d_stddev, 1e-14);

  EXPECT_THROW(mvnormal_logpdf(d, Eigen::Vector3d::Zero()), ValidationError);
}

TEST(MvNormal, MatchesDenseInverse) {
  std::mt19937_64 gen(23);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    Eigen::MatrixXd params = Eigen::MatrixXd::Zero(3, 3);
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c <= r; ++c) params(r, c) = 0.5 * n(gen);
    }
    Eigen::VectorXd mean(3), y(3);
    for (int j = 0; j < 3; ++j) {
      mean[j] = n(gen);
      y[j] = n(gen);
    }
    const MvNormalCholesky d{mean, params};
    EXPECT_NEAR(mvnormal_logpdf(d, y).value, testing::dense_mvnormal_logpdf(mean, d.factor(), y), 1e-10);
  }
}

TEST(MvNormal, PartialsMatchFiniteDifferences) {
  std::mt19937_64 gen(29);
  std::normal_distribution<double> n(0.0, 1.0);
  const double h = 1e-6;
  for (int trial = 0; trial < 100; ++trial) {
    Eigen::MatrixXd params = Eigen::MatrixXd::Zero(3, 3);
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c <= r; ++c) params(r, c) = 0.4 * n(gen);
    }
    Eigen::VectorXd mean(3), y(3);
    for (int j = 0; j < 3; ++j) {
      mean[j] = n(gen);
      y[j] = n(gen);
    }
    const MvNormalLogpdf r = mvnormal_logpdf({mean, params}, y);
    auto check = [&](double analytic, double plus, double minus) {
      const double fd = (plus - minus) / (2 * h);
      EXPECT_NEAR(analytic, fd, 1e-5 * std::max(1.0, std::abs(fd)));
    };
    for (int j = 0; j < 3; ++j) {
      Eigen::VectorXd mp = mean, mm = mean, yp = y, ym = y;
      mp[j] += h;
      mm[j] -= h;
      yp[j] += h;
      ym[j] -= h;
      check(r.d_mean[j], mvnormal_logpdf({mp, params}, y).value, mvnormal_logpdf({mm, params}, y).value);
      check(r.d_y[j], mvnormal_logpdf({mean, params}, yp).value, mvnormal_logpdf({mean, params}, ym).value);
    }
    for (int row = 0; row < 3; ++row) {
      for (int c = 0; c <= row; ++c) {
        Eigen::MatrixXd pp = params, pm = params;
        pp(row, c) += h;
        pm(row, c) -= h;
        check(r.d_factor_params(row, c), mvnormal_logpdf({mean, pp}, y).value, mvnormal_logpdf({mean, pm}, y).value);
      }
    }
  }
}

TEST(Probit, Examples) {
  EXPECT_NEAR(probit_switch({1.0, 1.0, 1.0}, 0).p_first, 0.5, 1e-15);
  EXPECT_NEAR(probit_switch({2.0, 1.0, 1.0}, 0).p_first, 0.841345, 1e-6);
  EXPECT_NEAR(probit_switch({1.0, 1.0, 1.0}, 0).d_threshold, 0.797885, 1e-6);
  // Piecewise step at x=0, lead 3, threshold 2, scale 1.
  EXPECT_NEAR(probit_switch({2.0, 1.0, 3.0}, 0).p_first, 0.158655, 1e-6);
  EXPECT_THROW(probit_switch({1.0, 0.0, 1.0}, 0), ValidationError);
  EXPECT_THROW(probit_switch({1.0, 1.0, 1.0}, 2), ValidationError);
}

TEST(Probit, PartialsMatchFiniteDifferencesAndHaveZeroMean) {
  std::mt19937_64 gen(31);
  std::uniform_real_distribution<double> u(-2, 2);
  const double h = 1e-6;
  for (int trial = 0; trial < 100; ++trial) {
    const ProbitSwitch sw{u(gen), 0.2 + std::abs(u(gen)), u(gen)};
    double mean_t = 0, mean_s = 0, mean_x = 0;
    for (int y = 0; y < 2; ++y) {
      const ProbitResult r = probit_switch(sw, y);
      const double p = y == 0 ? r.p_first : 1.0 - r.p_first;
      mean_t += p * r.d_threshold;
      mean_s += p * r.d_scale;
      mean_x += p * r.d_signal;
      auto lp = [&](ProbitSwitch s) { return probit_switch(s, y).logpmf; };
      const double fd_t = (lp({sw.threshold + h, sw.scale, sw.signal}) - lp({sw.threshold - h, sw.scale, sw.signal})) / (2 * h);
      const double fd_s = (lp({sw.threshold, sw.scale + h, sw.signal}) - lp({sw.threshold, sw.scale - h, sw.signal})) / (2 * h);
      const double fd_x = (lp({sw.threshold, sw.scale, sw.signal + h}) - lp({sw.threshold, sw.scale, sw.signal - h})) / (2 * h);
      EXPECT_NEAR(r.d_threshold, fd_t, 1e-5 * std::max(1.0, std::abs(fd_t)));
      EXPECT_NEAR(r.d_scale, fd_s, 1e-5 * std::max(1.0, std::abs(fd_s)));
      EXPECT_NEAR(r.d_signal, fd_x, 1e-5 * std::max(1.0, std::abs(fd_x)));
    }
    EXPECT_NEAR(mean_t, 0.0, 1e-12);
    EXPECT_NEAR(mean_s, 0.0, 1e-12);
    EXPECT_NEAR(mean_x, 0.0, 1e-12);
  }
}

}  // namespace
}  // namespace stochadj
