#include "stochadj/problems/categorical_game.hpp"

#include "stochadj/distributions.hpp"
#include "stochadj/error.hpp"

namespace stochadj {

RepeatedCategoricalModel::RepeatedCategoricalModel(int steps, int outcomes)
    : steps_(steps), outcomes_(outcomes) {
  if (steps < 1 || outcomes < 1) throw ValidationError("categorical game: need steps and outcomes");
}

ModelShape RepeatedCategoricalModel::shape() const {
  return {steps_, 1, 1, outcomes_, true, false};
}

StepDraw RepeatedCategoricalModel::draw(const StepInput& in, Rng& rng) const {
  return {Eigen::VectorXd(), Eigen::VectorXd::Constant(1, categorical_sample(in.theta, rng.uniform()))};
}

Eigen::VectorXd RepeatedCategoricalModel::step(const StepInput& in) const { return in.y; }

std::optional<LogDensity> RepeatedCategoricalModel::log_density(const StepInput& in) const {
  const CategoricalScore s = categorical_score(in.theta, static_cast<int>(in.y[0]));
  return LogDensity{s.logpmf, s.d_logits, {Eigen::VectorXd::Zero(1)}};
}

void RepeatedCategoricalModel::step_vjp(const StepInput&, const Eigen::VectorXd&, Eigen::VectorXd&,
                                        std::vector<Eigen::VectorXd>&) const {}

std::vector<Outcome> RepeatedCategoricalModel::support(const StepInput& in) const {
  const Eigen::VectorXd p = softmax(in.theta);
  std::vector<Outcome> out;
  for (int k = 0; k < outcomes_; ++k) out.push_back({Eigen::VectorXd::Constant(1, k), p[k]});
  return out;
}

}  // namespace stochadj
