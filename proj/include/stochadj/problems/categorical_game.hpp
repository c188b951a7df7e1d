#pragma once

#include <vector>

#include <Eigen/Dense>

#include "stochadj/model.hpp"

namespace stochadj {

/// n independent draws from one softmax policy; the state after step i is
/// the drawn outcome index. Used by the coin flip and the bandit.
class RepeatedCategoricalModel : public StepModel {
 public:
  RepeatedCategoricalModel(int steps, int outcomes);

  ModelShape shape() const override;
  StepDraw draw(const StepInput& in, Rng& rng) const override;
  Eigen::VectorXd step(const StepInput& in) const override;
  std::optional<LogDensity> log_density(const StepInput& in) const override;
  void step_vjp(const StepInput& in, const Eigen::VectorXd& lambda, Eigen::VectorXd& d_theta,
                std::vector<Eigen::VectorXd>& d_lags) const override;
  std::vector<Outcome> support(const StepInput& in) const override;

 private:
  int steps_;
  int outcomes_;
};

}  // namespace stochadj
