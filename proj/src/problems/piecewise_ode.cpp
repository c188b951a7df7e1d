#include "stochadj/problems/piecewise_ode.hpp"

#include <cmath>
#include <string>

#include "stochadj/distributions.hpp"
#include "stochadj/error.hpp"

namespace stochadj {

PiecewiseOdeModel::PiecewiseOdeModel(std::vector<double> lead) : lead_(std::move(lead)) {
  if (lead_.size() < 2) throw ValidationError("piecewise_ode.lead: need at least two positions");
}

ModelShape PiecewiseOdeModel::shape() const {
  return {static_cast<int>(lead_.size()) - 1, 1, 1, 3, true, true};
}

namespace {

ProbitSwitch switch_at(const StepInput& in, double headway) {
  return {in.theta[0], in.theta[2], headway};
}

}  // namespace

StepDraw PiecewiseOdeModel::draw(const StepInput& in, Rng& rng) const {
  const double s = headway(in.step, in.window.previous()[0]);
  const double p_slow = probit_switch(switch_at(in, s), kSlowBranch).p_first;
  const int branch = rng.uniform() < p_slow ? kSlowBranch : kFastBranch;
  return {Eigen::VectorXd(), Eigen::VectorXd::Constant(1, branch)};
}

Eigen::VectorXd PiecewiseOdeModel::step(const StepInput& in) const {
  const double speed = static_cast<int>(in.y[0]) == kSlowBranch ? in.theta[1] : 1.0;
  return Eigen::VectorXd::Constant(1, in.window.previous()[0] + speed);
}

std::optional<LogDensity> PiecewiseOdeModel::log_density(const StepInput& in) const {
  const double s = headway(in.step, in.window.previous()[0]);
  const ProbitResult r = probit_switch(switch_at(in, s), static_cast<int>(in.y[0]));
  LogDensity ld;
  ld.value = r.logpmf;
  ld.d_theta = Eigen::Vector3d(r.d_threshold, 0.0, r.d_scale);
  ld.d_lags = {Eigen::VectorXd::Constant(1, -r.d_signal)};
  return ld;
}

void PiecewiseOdeModel::step_vjp(const StepInput& in, const Eigen::VectorXd& lambda,
                                 Eigen::VectorXd& d_theta, std::vector<Eigen::VectorXd>& d_lags) const {
  if (static_cast<int>(in.y[0]) == kSlowBranch) d_theta[1] += lambda[0];
  d_lags[0] += lambda;
}

std::vector<Outcome> PiecewiseOdeModel::support(const StepInput& in) const {
  const double s = headway(in.step, in.window.previous()[0]);
  const double p_slow = probit_switch(switch_at(in, s), kSlowBranch).p_first;
  return {{Eigen::VectorXd::Constant(1, kSlowBranch), p_slow},
          {Eigen::VectorXd::Constant(1, kFastBranch), 1.0 - p_slow}};
}

PiecewiseScenario default_piecewise_scenario() {
  PiecewiseScenario sc;
  sc.steps = 20;
  sc.x0 = 0.0;
  const std::vector<double> lead_speed = {1, 1, 1, 1, 0, 0, 0, 0, 3.5, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1};
  sc.lead.assign(1, 2.5);
  for (double v : lead_speed) sc.lead.push_back(sc.lead.back() + v);
  sc.target.assign(sc.steps + 1, 0.0);
  const std::vector<double> path = piecewise_deterministic_path(sc, 1.6, 0.1);
  for (int i = 1; i <= sc.steps; ++i) sc.target[i] = path[i];
  return sc;
}

std::vector<double> piecewise_deterministic_path(const PiecewiseScenario& scenario, double threshold,
                                                 double slow_speed) {
  std::vector<double> x(scenario.steps + 1);
  x[0] = scenario.x0;
  for (int i = 1; i <= scenario.steps; ++i) {
    const double s = scenario.lead[i - 1] - x[i - 1];
    x[i] = x[i - 1] + (s < threshold ? slow_speed : 1.0);
  }
  return x;
}

double piecewise_loss(const PiecewiseScenario& scenario, const std::vector<double>& path) {
  double total = 0.0;
  for (int i = 1; i <= scenario.steps; ++i) {
    const double d = path[i] - scenario.target[i];
    total += d * d;
  }
  return total / scenario.steps;
}

Problem build_piecewise_ode(const PiecewiseScenario& scenario) {
  if (scenario.steps < 1) throw ValidationError("piecewise_ode.steps: must be at least 1");
  if (static_cast<int>(scenario.lead.size()) != scenario.steps + 1) {
    throw ValidationError("piecewise_ode.lead: expected steps+1 positions");
  }
  if (static_cast<int>(scenario.target.size()) != scenario.steps + 1) {
    throw ValidationError("piecewise_ode.target: expected steps+1 entries");
  }
  if (!(scenario.theta0[2] > 0.0)) throw ValidationError("piecewise_ode.theta0: scale must be positive");
  if (!(scenario.min_scale > 0.0)) throw ValidationError("piecewise_ode.min_scale: must be positive");
  Problem p;
  p.name = "piecewise_ode";
  p.model = std::make_shared<PiecewiseOdeModel>(scenario.lead);
  const std::vector<double> target = scenario.target;
  const double w = 1.0 / scenario.steps;
  p.loss = LossSpec::summable([target, w](int i, const Eigen::VectorXd& x, Eigen::VectorXd* grad) {
    const double d = x[0] - target[i];
    if (grad) (*grad)[0] = 2.0 * w * d;
    return w * d * d;
  });
  p.x0 = Eigen::VectorXd::Constant(1, scenario.x0);
  p.theta0 = ParamVector(scenario.theta0, {{"threshold", 0, 1}, {"slow_speed", 1, 1}, {"scale", 2, 1}});
  p.sense = Sense::kMinimize;
  const double floor = scenario.min_scale;
  p.project = [floor](const Eigen::VectorXd& theta) {
    Eigen::VectorXd out = theta;
    out[2] = std::max(out[2], floor);
    return out;
  };
  p.keys = ConditioningKey::linear(1, [](const PathPrefix&) { return Eigen::VectorXd::Ones(1); });
  p.metric_name = "slow_speed";
  p.metric = [](const Eigen::VectorXd& theta) { return theta[1]; };
  p.enumerable = scenario.steps <= 19;
  return p;
}

}  // namespace stochadj
