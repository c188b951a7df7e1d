#include "stochadj/problems/bandit.hpp"

#include "stochadj/distributions.hpp"
#include "stochadj/error.hpp"
#include "stochadj/problems/categorical_game.hpp"

namespace stochadj {

Problem build_bandit(const BanditConfig& config) {
  const Eigen::Index arms = config.rewards.size();
  if (arms < 1) throw ValidationError("bandit.rewards: need at least one arm");
  if (config.theta0.size() != arms) {
    throw ValidationError("bandit.theta0: expected one logit per arm");
  }
  if (!config.theta0.allFinite() || !config.rewards.allFinite()) {
    throw ValidationError("bandit: non-finite entries");
  }
  Problem p;
  p.name = "bandit";
  p.model = std::make_shared<RepeatedCategoricalModel>(1, static_cast<int>(arms));
  const Eigen::VectorXd rewards = config.rewards;
  p.loss = LossSpec::general([rewards](const std::vector<Eigen::VectorXd>& x,
                                       std::vector<Eigen::VectorXd>*) {
    return rewards[static_cast<int>(x[1][0])];
  });
  p.x0 = Eigen::VectorXd::Zero(1);
  p.theta0 = ParamVector(config.theta0, {{"logits", 0, static_cast<int>(arms)}});
  p.sense = Sense::kMaximize;
  p.keys = constant_key();
  p.metric_name = "reward";
  p.metric = [rewards](const Eigen::VectorXd& theta) { return bandit_expected_reward(theta, rewards); };
  p.enumerable = true;
  p.exact_objective = p.metric;
  p.exact_gradient = [rewards](const Eigen::VectorXd& theta) {
    const Eigen::VectorXd probs = softmax(theta);
    return Eigen::VectorXd(probs.cwiseProduct(rewards.array().matrix() - Eigen::VectorXd::Constant(probs.size(), probs.dot(rewards))));
  };
  return p;
}

double bandit_expected_reward(const Eigen::VectorXd& theta, const Eigen::VectorXd& rewards) {
  return softmax(theta).dot(rewards);
}

}  // namespace stochadj
