#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>

#include <Eigen/Dense>

#include "stochadj/baselines.hpp"
#include "stochadj/model.hpp"

namespace stochadj {

enum class Sense { kMinimize, kMaximize };

/// A built problem: model, loss, fixed start state and the extras the
/// optimizer and oracles look for.
struct Problem {
  std::string name;
  std::shared_ptr<const StepModel> model;
  LossSpec loss = LossSpec::summable([](int, const Eigen::VectorXd&, Eigen::VectorXd*) { return 0.0; });
  Eigen::VectorXd x0;
  ParamVector theta0;
  Sense sense = Sense::kMinimize;
  // Default conditioning key for baselines, if the problem defines one.
  std::optional<ConditioningKey> keys;
  // Maps an iterate back into the feasible set; identity when empty.
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> project;
  // Reported alongside training, e.g. P(heads) or expected reward.
  std::string metric_name;
  std::function<double(const Eigen::VectorXd&)> metric;
  // Closed-form expectation and its gradient, where the problem has one.
  std::function<double(const Eigen::VectorXd&)> exact_objective;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> exact_gradient;
  // Every step has finite support and no pathwise noise.
  bool enumerable = false;

  Eigen::VectorXd projected(const Eigen::VectorXd& theta) const {
    return project ? project(theta) : theta;
  }
};

// A problem-level key that always returns 0 (one pooled baseline value).
ConditioningKey constant_key();

}  // namespace stochadj
