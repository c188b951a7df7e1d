#pragma once

#include <Eigen/Dense>

#include "stochadj/problems/problem.hpp"

namespace stochadj {

/// Two flips of one coin with logits [tails, heads]. Payoff 1 for two
/// tails, 2 for two heads, 4 for a mixed pair; the player maximizes it.
struct CoinFlipConfig {
  Eigen::Vector2d theta0{1.0, 1.0};
  double payoff_tails = 1.0;
  double payoff_heads = 2.0;
  double payoff_mixed = 4.0;
};

constexpr int kTails = 0;
constexpr int kHeads = 1;

Problem build_coin_flip(const CoinFlipConfig& config = {});

// Keys: step 1 -> 0; step 2 -> 1 after tails, 2 after heads.
ConditioningKey coin_flip_keys();

double coin_flip_p_heads(const Eigen::VectorXd& theta);

}  // namespace stochadj
