#include "stochadj/problems/coin_flip.hpp"

#include "stochadj/distributions.hpp"
#include "stochadj/error.hpp"
#include "stochadj/problems/categorical_game.hpp"

namespace stochadj {

Problem build_coin_flip(const CoinFlipConfig& config) {
  if (!config.theta0.allFinite()) throw ValidationError("coin_flip.theta0: non-finite");
  Problem p;
  p.name = "coin_flip";
  p.model = std::make_shared<RepeatedCategoricalModel>(2, 2);
  const double tt = config.payoff_tails;
  const double hh = config.payoff_heads;
  const double mixed = config.payoff_mixed;
  p.loss = LossSpec::general([tt, hh, mixed](const std::vector<Eigen::VectorXd>& x,
                                             std::vector<Eigen::VectorXd>*) {
    const int a = static_cast<int>(x[1][0]);
    const int b = static_cast<int>(x[2][0]);
    if (a != b) return mixed;
    return a == kHeads ? hh : tt;
  });
  p.x0 = Eigen::VectorXd::Zero(1);
  p.theta0 = ParamVector(config.theta0, {{"logit_tails", 0, 1}, {"logit_heads", 1, 1}});
  p.sense = Sense::kMaximize;
  p.keys = coin_flip_keys();
  p.metric_name = "p_heads";
  p.metric = coin_flip_p_heads;
  p.enumerable = true;
  p.exact_objective = [tt, hh, mixed](const Eigen::VectorXd& theta) {
    const double q = coin_flip_p_heads(theta);
    return tt * (1 - q) * (1 - q) + hh * q * q + 2.0 * mixed * q * (1 - q);
  };
  p.exact_gradient = [tt, hh, mixed](const Eigen::VectorXd& theta) {
    const double q = coin_flip_p_heads(theta);
    const double d_q = -2.0 * tt * (1 - q) + 2.0 * hh * q + 2.0 * mixed * (1 - 2 * q);
    return Eigen::VectorXd(Eigen::Vector2d(-1.0, 1.0) * (d_q * q * (1 - q)));
  };
  return p;
}

ConditioningKey coin_flip_keys() {
  return ConditioningKey::table(3, [](const PathPrefix& prefix) {
    return prefix.step() == 1 ? 0 : 1 + static_cast<int>(prefix.y(1)[0]);
  });
}

double coin_flip_p_heads(const Eigen::VectorXd& theta) { return softmax(theta)[kHeads]; }

}  // namespace stochadj
