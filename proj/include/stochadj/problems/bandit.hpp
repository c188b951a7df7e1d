#pragma once

#include <Eigen/Dense>

#include "stochadj/problems/problem.hpp"

namespace stochadj {

/// One pull of a softmax-parametrized multi-arm bandit with fixed rewards;
/// the player maximizes the reward.
struct BanditConfig {
  Eigen::VectorXd theta0 = Eigen::Vector3d(3.0, 2.0, 1.0);
  Eigen::VectorXd rewards = Eigen::Vector3d(0.0, 0.7, 1.0);
};

Problem build_bandit(const BanditConfig& config = {});

double bandit_expected_reward(const Eigen::VectorXd& theta, const Eigen::VectorXd& rewards);

}  // namespace stochadj
