#include "stochadj/model.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "stochadj/error.hpp"

namespace stochadj {

StateWindow::StateWindow(const std::vector<Eigen::VectorXd>& states, int step, int lag) {
  lags_.reserve(lag);
  for (int l = 1; l <= lag; ++l) lags_.push_back(&states[std::max(step - l, 0)]);
}

std::optional<LogDensity> StepModel::log_density(const StepInput&) const { return std::nullopt; }

std::vector<Outcome> StepModel::support(const StepInput&) const {
  throw ValidationError("model has no finite support for enumeration");
}

bool StepModel::at_kink(const StepInput&) const { return false; }

LossSpec LossSpec::general(GeneralFn fn) {
  if (!fn) throw ValidationError("LossSpec: empty general loss");
  LossSpec out;
  out.general_fn_ = std::move(fn);
  return out;
}

LossSpec LossSpec::summable(StepFn fn) {
  if (!fn) throw ValidationError("LossSpec: empty per-step loss");
  LossSpec out;
  out.step_fn_ = std::move(fn);
  return out;
}

double LossSpec::evaluate(const std::vector<Eigen::VectorXd>& x,
                          std::vector<double>* step_losses) const {
  if (general_fn_) {
    if (step_losses) step_losses->clear();
    return general_fn_(x, nullptr);
  }
  if (!step_fn_) throw ValidationError("LossSpec: not initialized");
  const int n = static_cast<int>(x.size()) - 1;
  if (step_losses) step_losses->assign(n + 1, 0.0);
  double total = 0.0;
  for (int i = 1; i <= n; ++i) {
    const double f = step_fn_(i, x[i], nullptr);
    if (step_losses) (*step_losses)[i] = f;
    total += f;
  }
  return total;
}

std::vector<Eigen::VectorXd> LossSpec::gradient(const std::vector<Eigen::VectorXd>& x) const {
  std::vector<Eigen::VectorXd> grad(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) grad[i] = Eigen::VectorXd::Zero(x[i].size());
  if (general_fn_) {
    general_fn_(x, &grad);
  } else {
    for (std::size_t i = 1; i < x.size(); ++i) step_fn_(static_cast<int>(i), x[i], &grad[i]);
  }
  return grad;
}

double LossSpec::step_loss(int step, const Eigen::VectorXd& x, Eigen::VectorXd* grad) const {
  if (!step_fn_) throw ValidationError("LossSpec: per-step losses need a summable loss");
  return step_fn_(step, x, grad);
}

ParamVector::ParamVector(Eigen::VectorXd values, std::vector<ParamSlice> slices)
    : values_(std::move(values)), slices_(std::move(slices)) {
  if (!values_.allFinite()) throw ValidationError("ParamVector: non-finite entries");
  int covered = 0;
  for (const ParamSlice& s : slices_) {
    if (s.offset != covered || s.size < 0) {
      throw ValidationError("ParamVector: slice '" + s.name + "' is not contiguous");
    }
    covered += s.size;
  }
  if (!slices_.empty() && covered != values_.size()) {
    throw ValidationError("ParamVector: slices cover " + std::to_string(covered) + " of " +
                          std::to_string(values_.size()) + " entries");
  }
}

Eigen::VectorXd ParamVector::slice(const std::string& name) const {
  for (const ParamSlice& s : slices_) {
    if (s.name == name) return values_.segment(s.offset, s.size);
  }
  throw ValidationError("ParamVector: no slice named '" + name + "'");
}

std::string ParamVector::coordinate_name(int j) const {
  for (const ParamSlice& s : slices_) {
    if (j >= s.offset && j < s.offset + s.size) {
      return s.size == 1 ? s.name : s.name + "[" + std::to_string(j - s.offset) + "]";
    }
  }
  return "theta[" + std::to_string(j) + "]";
}

void check_theta(const StepModel& model, const Eigen::VectorXd& theta) {
  const ModelShape shape = model.shape();
  if (theta.size() != shape.param_dim) {
    throw ValidationError("theta has dimension " + std::to_string(theta.size()) + ", model expects " +
                          std::to_string(shape.param_dim));
  }
  if (!theta.allFinite()) throw NumericalError("theta has non-finite entries");
}

namespace {

void finish(const StepModel& model, const LossSpec& loss, const Eigen::VectorXd& theta,
            Trajectory& traj, const std::function<StepDraw(const StepInput&)>& next, bool record_logp = true) {
  const ModelShape shape = model.shape();
  const int n = shape.steps;
  const Eigen::VectorXd empty;
  traj.x.resize(n + 1);
  traj.z.resize(n + 1);
  traj.y.resize(n + 1);
  traj.logp.assign(n + 1, std::numeric_limits<double>::quiet_NaN());
  for (int i = 1; i <= n; ++i) {
    const StateWindow window(traj.x, i, shape.lag);
    StepDraw d = next(StepInput{i, window, theta, empty, empty});
    traj.z[i] = std::move(d.z);
    traj.y[i] = std::move(d.y);
    const StepInput in{i, window, theta, traj.y[i], traj.z[i]};
    Eigen::VectorXd xi = model.step(in);
    if (xi.size() != shape.state_dim) {
      throw ValidationError("step " + std::to_string(i) + " returned state of dimension " +
                            std::to_string(xi.size()));
    }
    if (!xi.allFinite()) throw NumericalError("non-finite state at step " + std::to_string(i));
    if (record_logp && traj.y[i].size() > 0) {
      if (auto lp = model.log_density(in)) traj.logp[i] = lp->value;
    }
    traj.x[i] = std::move(xi);
  }
  traj.objective = loss.evaluate(traj.x, &traj.step_losses);
  if (!std::isfinite(traj.objective)) throw NumericalError("non-finite objective");
}

}  // namespace

Trajectory simulate(const StepModel& model, const LossSpec& loss, const Eigen::VectorXd& theta,
                    const Eigen::VectorXd& x0, std::uint64_t seed) {
  check_theta(model, theta);
  if (x0.size() != model.shape().state_dim) {
    throw ValidationError("x0 has dimension " + std::to_string(x0.size()) + ", model expects " +
                          std::to_string(model.shape().state_dim));
  }
  Rng rng(seed);
  Trajectory traj;
  traj.x.assign(1, x0);
  finish(model, loss, theta, traj, [&](const StepInput& in) { return model.draw(in, rng); });
  return traj;
}

double simulate_objective(const StepModel& model, const LossSpec& loss, const Eigen::VectorXd& theta,
                          const Eigen::VectorXd& x0, std::uint64_t seed) {
  check_theta(model, theta);
  if (x0.size() != model.shape().state_dim) throw ValidationError("x0 does not match the model state");
  Rng rng(seed);
  Trajectory traj;
  traj.x.assign(1, x0);
  finish(model, loss, theta, traj, [&](const StepInput& in) { return model.draw(in, rng); }, false);
  return traj.objective;
}

Trajectory replay(const StepModel& model, const LossSpec& loss, const Eigen::VectorXd& theta,
                  const Trajectory& recorded) {
  check_theta(model, theta);
  const ModelShape shape = model.shape();
  if (recorded.steps() != shape.steps || recorded.x[0].size() != shape.state_dim ||
      recorded.y.size() != recorded.x.size() || recorded.z.size() != recorded.x.size()) {
    throw ValidationError("replay: trajectory does not match the model");
  }
  Trajectory traj;
  traj.x.assign(1, recorded.x[0]);
  finish(model, loss, theta, traj, [&](const StepInput& in) {
    return StepDraw{recorded.z[in.step], recorded.y[in.step]};
  });
  return traj;
}

}  // namespace stochadj
