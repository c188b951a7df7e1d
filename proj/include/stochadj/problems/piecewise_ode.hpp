#pragma once

#include <vector>

#include <Eigen/Dense>

#include "stochadj/problems/problem.hpp"

namespace stochadj {

/// A follower behind a lead vehicle with two speeds. At step i the headway
/// s = lead[i-1] - x_{i-1} picks the slow branch (x + theta[1]) with
/// probability Phi((theta[0] - s) / theta[2]) and the fast branch (x + 1)
/// otherwise. Loss is the mean over steps of the squared distance to a
/// target path.
///
/// Parameters: theta[0] headway threshold, theta[1] slow speed, theta[2]
/// switch scale.
struct PiecewiseScenario {
  int steps = 0;
  double x0 = 0.0;
  std::vector<double> lead;    // lead[0..n]
  std::vector<double> target;  // target[1..n], slot 0 unused
  Eigen::Vector3d theta0{2.1, 0.5, 0.3};
  double min_scale = 1e-3;     // projection floor for theta[2]
};

constexpr int kSlowBranch = 0;
constexpr int kFastBranch = 1;

class PiecewiseOdeModel : public StepModel {
 public:
  explicit PiecewiseOdeModel(std::vector<double> lead);

  ModelShape shape() const override;
  StepDraw draw(const StepInput& in, Rng& rng) const override;
  Eigen::VectorXd step(const StepInput& in) const override;
  std::optional<LogDensity> log_density(const StepInput& in) const override;
  void step_vjp(const StepInput& in, const Eigen::VectorXd& lambda, Eigen::VectorXd& d_theta,
                std::vector<Eigen::VectorXd>& d_lags) const override;
  std::vector<Outcome> support(const StepInput& in) const override;

  double headway(int step, double previous) const { return lead_[step - 1] - previous; }

 private:
  std::vector<double> lead_;
};

// 20 steps. The lead starts 2.5 ahead at speed 1, stops for four steps,
// then leaps 3.5 in one step and resumes speed 1. The target comes from
// the deterministic rule with threshold 1.6 and slow speed 0.1, so every
// threshold in (1.5, 2.5] fits it exactly. The leap is large enough that
// no slow speed in [0, 1) adds a slow step after the stop.
PiecewiseScenario default_piecewise_scenario();

// Positions x_0..x_n under the deterministic switch: slow when s < threshold.
std::vector<double> piecewise_deterministic_path(const PiecewiseScenario& scenario, double threshold,
                                                 double slow_speed);

double piecewise_loss(const PiecewiseScenario& scenario, const std::vector<double>& path);

Problem build_piecewise_ode(const PiecewiseScenario& scenario);

}  // namespace stochadj
