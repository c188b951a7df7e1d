#include "stochadj/baselines.hpp"

#include <cmath>
#include <string>

#include "stochadj/error.hpp"

namespace stochadj {

PathPrefix::PathPrefix(const Trajectory& trajectory, int step)
    : trajectory_(trajectory), step_(step) {
  if (step < 1 || step > trajectory.steps()) {
    throw ValidationError("PathPrefix: step " + std::to_string(step) + " out of range");
  }
}

const Eigen::VectorXd& PathPrefix::x(int j) const {
  if (j < 0 || j >= step_) {
    throw ValidationError("baseline for step " + std::to_string(step_) + " may not read x_" +
                          std::to_string(j));
  }
  return trajectory_.x[j];
}

const Eigen::VectorXd& PathPrefix::y(int j) const {
  if (j < 1 || j >= step_) {
    throw ValidationError("baseline for step " + std::to_string(step_) + " may not read y_" +
                          std::to_string(j));
  }
  return trajectory_.y[j];
}

const Eigen::VectorXd& PathPrefix::z(int j) const {
  if (j < 1 || j > trajectory_.steps()) throw ValidationError("PathPrefix: z index out of range");
  return trajectory_.z[j];
}

ConditioningKey ConditioningKey::table(int key_count, TableFn fn) {
  if (key_count < 1 || !fn) throw ValidationError("ConditioningKey: need a positive key count");
  ConditioningKey k;
  k.table_fn_ = std::move(fn);
  k.key_count_ = key_count;
  k.feature_dim_ = key_count;
  return k;
}

ConditioningKey ConditioningKey::linear(int feature_dim, FeatureFn fn) {
  if (feature_dim < 1 || !fn) throw ValidationError("ConditioningKey: need a positive feature dim");
  ConditioningKey k;
  k.feature_fn_ = std::move(fn);
  k.feature_dim_ = feature_dim;
  return k;
}

int ConditioningKey::key(const Trajectory& trajectory, int step) const {
  if (!table_fn_) throw ValidationError("ConditioningKey: not a tabular key");
  return table_fn_(PathPrefix(trajectory, step));
}

Eigen::VectorXd ConditioningKey::features(const Trajectory& trajectory, int step) const {
  if (table_fn_) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(key_count_);
    const int k = key(trajectory, step);
    if (k >= 0 && k < key_count_) e[k] = 1.0;
    return e;
  }
  Eigen::VectorXd f = feature_fn_(PathPrefix(trajectory, step));
  if (f.size() != feature_dim_) throw ValidationError("ConditioningKey: feature dimension mismatch");
  return f;
}

const char* baseline_kind_name(BaselineKind kind) {
  switch (kind) {
    case BaselineKind::kNone: return "none";
    case BaselineKind::kValue: return "value";
    case BaselineKind::kCOptimal: return "c_optimal";
    case BaselineKind::kCOptimalPerParam: return "c_optimal_per_param";
    case BaselineKind::kFnApprox: return "fn_approx";
    case BaselineKind::kDirect: return "direct";
  }
  return "?";
}

BaselineKind parse_baseline_kind(const std::string& name) {
  for (BaselineKind k : {BaselineKind::kNone, BaselineKind::kValue, BaselineKind::kCOptimal,
                         BaselineKind::kCOptimalPerParam, BaselineKind::kFnApprox,
                         BaselineKind::kDirect}) {
    if (name == baseline_kind_name(k)) return k;
  }
  throw ValidationError("unknown baseline kind '" + name + "'");
}

namespace {

void check_alpha(double alpha) {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) {
    throw ValidationError("baseline learning rate must be positive");
  }
}

}  // namespace

BaselineState BaselineState::none(int param_dim) {
  BaselineState s;
  s.param_dim_ = param_dim;
  return s;
}

BaselineState BaselineState::value(const ConditioningKey& keys, int param_dim, double alpha,
                                   UpdateRule rule) {
  check_alpha(alpha);
  if (rule == UpdateRule::kRunningMean && !keys.is_tabular()) {
    throw ValidationError("running-mean updates need a tabular key");
  }
  BaselineState s;
  s.kind_ = BaselineKind::kValue;
  s.param_dim_ = param_dim;
  s.alpha_ = alpha;
  s.rule_ = rule;
  s.tabular_ = keys.is_tabular();
  s.numer_ = Eigen::MatrixXd::Zero(keys.feature_dim(), 1);
  s.counts_ = Eigen::VectorXd::Zero(keys.feature_dim());
  return s;
}

BaselineState BaselineState::c_optimal(const ConditioningKey& keys, int param_dim, double alpha,
                                       bool per_parameter, UpdateRule rule) {
  check_alpha(alpha);
  if (!keys.is_tabular()) throw ValidationError("c-optimal baselines need a tabular key");
  BaselineState s;
  s.kind_ = per_parameter ? BaselineKind::kCOptimalPerParam : BaselineKind::kCOptimal;
  s.param_dim_ = param_dim;
  s.alpha_ = alpha;
  s.rule_ = rule;
  const int cols = per_parameter ? param_dim : 1;
  s.numer_ = Eigen::MatrixXd::Zero(keys.key_count(), cols);
  s.denom_ = Eigen::MatrixXd::Zero(keys.key_count(), cols);
  s.counts_ = Eigen::VectorXd::Zero(keys.key_count());
  return s;
}

BaselineState BaselineState::fn_approx(const ConditioningKey& keys, int param_dim, double alpha) {
  check_alpha(alpha);
  BaselineState s;
  s.kind_ = BaselineKind::kFnApprox;
  s.param_dim_ = param_dim;
  s.alpha_ = alpha;
  s.tabular_ = keys.is_tabular();
  s.numer_ = Eigen::MatrixXd::Zero(keys.feature_dim(), 1);
  s.denom_ = Eigen::MatrixXd::Zero(keys.feature_dim(), 1);
  return s;
}

BaselineState BaselineState::direct(const ConditioningKey& keys, int param_dim, double alpha) {
  check_alpha(alpha);
  BaselineState s;
  s.kind_ = BaselineKind::kDirect;
  s.param_dim_ = param_dim;
  s.alpha_ = alpha;
  s.tabular_ = keys.is_tabular();
  s.numer_ = Eigen::MatrixXd::Zero(keys.feature_dim(), 1);
  return s;
}

BaselineState BaselineState::make(BaselineKind kind, const ConditioningKey& keys, int param_dim,
                                  double alpha, UpdateRule rule) {
  switch (kind) {
    case BaselineKind::kNone: return none(param_dim);
    case BaselineKind::kValue: return value(keys, param_dim, alpha, rule);
    case BaselineKind::kCOptimal: return c_optimal(keys, param_dim, alpha, false, rule);
    case BaselineKind::kCOptimalPerParam: return c_optimal(keys, param_dim, alpha, true, rule);
    case BaselineKind::kFnApprox: return fn_approx(keys, param_dim, alpha);
    case BaselineKind::kDirect: return direct(keys, param_dim, alpha);
  }
  throw ValidationError("unknown baseline kind");
}

BetaEval BaselineState::beta_from_key(int key, const Eigen::VectorXd& features) const {
  BetaEval out;
  out.beta = Eigen::VectorXd::Zero(param_dim_);
  if (kind_ == BaselineKind::kNone) return out;
  const bool keyed = kind_ == BaselineKind::kCOptimal || kind_ == BaselineKind::kCOptimalPerParam;
  if ((keyed || tabular_) && (key < 0 || key >= numer_.rows())) {
    out.cold_start = true;
    return out;
  }
  switch (kind_) {
    case BaselineKind::kValue:
    case BaselineKind::kDirect:
      out.beta.setConstant(numer_.col(0).dot(features));
      break;
    case BaselineKind::kCOptimal:
      if (denom_(key, 0) < floor_) {
        out.floored = true;
      } else {
        out.beta.setConstant(numer_(key, 0) / denom_(key, 0));
      }
      break;
    case BaselineKind::kCOptimalPerParam:
      for (int l = 0; l < param_dim_; ++l) {
        if (denom_(key, l) < floor_) {
          out.floored = true;
        } else {
          out.beta[l] = numer_(key, l) / denom_(key, l);
        }
      }
      break;
    case BaselineKind::kFnApprox: {
      const double bottom = denom_.col(0).dot(features);
      if (bottom < floor_) {
        out.floored = true;
      } else {
        out.beta.setConstant(numer_.col(0).dot(features) / bottom);
      }
      break;
    }
    case BaselineKind::kNone:
      break;
  }
  if (!out.beta.allFinite()) throw NumericalError("baseline produced a non-finite beta");
  return out;
}

BetaEval BaselineState::beta(const ConditioningKey& keys, const Trajectory& trajectory,
                             int step) const {
  if (kind_ == BaselineKind::kNone) return beta_from_key(0, {});
  const int key = keys.is_tabular() ? keys.key(trajectory, step) : 0;
  return beta_from_key(key, keys.features(trajectory, step));
}

BetaEval BaselineState::beta_at_key(int key) const {
  if (!tabular_) throw ValidationError("beta_at_key: baseline is not tabular");
  Eigen::VectorXd features = Eigen::VectorXd::Zero(numer_.rows());
  if (key >= 0 && key < numer_.rows()) features[key] = 1.0;
  return beta_from_key(key, features);
}

namespace {

void append_rows(const Eigen::MatrixXd& m, std::vector<double>& out) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) out.push_back(m(r, c));
  }
}

Eigen::Index read_rows(Eigen::MatrixXd& m, const Eigen::VectorXd& phi, Eigen::Index at) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = phi[at++];
  }
  return at;
}

}  // namespace

Eigen::VectorXd BaselineState::parameters() const {
  std::vector<double> flat;
  append_rows(numer_, flat);
  append_rows(denom_, flat);
  return Eigen::Map<Eigen::VectorXd>(flat.data(), static_cast<Eigen::Index>(flat.size()));
}

void BaselineState::set_parameters(const Eigen::VectorXd& phi) {
  if (phi.size() != numer_.size() + denom_.size()) {
    throw ValidationError("BaselineState: parameter vector has wrong length");
  }
  if (!phi.allFinite()) throw NumericalError("BaselineState: non-finite parameters");
  read_rows(denom_, phi, read_rows(numer_, phi, 0));
}

namespace {

struct Component {
  int key;
  Eigen::VectorXd features;
  double weight;
  const Eigen::VectorXd* score;
};

std::vector<Component> gather(const GradEstimate& estimate, const ConditioningKey& keys,
                              const Trajectory& trajectory, const ComponentWeights& weights,
                              bool need_keys) {
  if (!weights.empty() && weights.size() != estimate.score_components.size()) {
    throw ValidationError("baseline: one weight per score component required");
  }
  std::vector<Component> out;
  out.reserve(estimate.score_components.size());
  for (std::size_t j = 0; j < estimate.score_components.size(); ++j) {
    const ScoreComponent& c = estimate.score_components[j];
    Component comp{-1, {}, weights.empty() ? c.weight : weights[j], &c.score};
    if (need_keys) {
      if (keys.is_tabular()) comp.key = keys.key(trajectory, c.step);
      comp.features = keys.features(trajectory, c.step);
    }
    out.push_back(std::move(comp));
  }
  return out;
}

Eigen::VectorXd score_weighted(const std::vector<Component>& comps, int m) {
  Eigen::VectorXd g = Eigen::VectorXd::Zero(m);
  for (const Component& c : comps) g += c.weight * *c.score;
  return g;
}

void require_kind(const BaselineState& s, BaselineKind kind, const char* op) {
  if (s.kind() != kind) {
    throw ValidationError(std::string(op) + ": baseline kind is " + baseline_kind_name(s.kind()) +
                          ", expected " + baseline_kind_name(kind));
  }
}

int checked_key(const Component& c, const BaselineState& s) {
  if (c.key < 0 || c.key >= s.numer().rows()) {
    throw ValidationError("baseline update: key " + std::to_string(c.key) + " not in table");
  }
  return c.key;
}

Eigen::VectorXd flatten(const Eigen::MatrixXd& grad_numer, const Eigen::MatrixXd& grad_denom) {
  std::vector<double> flat;
  append_rows(grad_numer, flat);
  append_rows(grad_denom, flat);
  Eigen::VectorXd g = Eigen::Map<Eigen::VectorXd>(flat.data(), static_cast<Eigen::Index>(flat.size()));
  if (!g.allFinite()) throw NumericalError("baseline update: non-finite gradient");
  return g;
}

// Gradient of the baseline's own objective for one trajectory, no step.
Eigen::VectorXd baseline_gradient(const BaselineState& state, const GradEstimate& estimate,
                                  const ConditioningKey& keys, const Trajectory& trajectory,
                                  const ComponentWeights& weights) {
  const int m = state.param_dim();
  const std::vector<Component> comps = gather(estimate, keys, trajectory, weights, true);
  Eigen::MatrixXd gn = Eigen::MatrixXd::Zero(state.numer().rows(), state.numer().cols());
  Eigen::MatrixXd gd = Eigen::MatrixXd::Zero(state.denom().rows(), state.denom().cols());
  switch (state.kind()) {
    case BaselineKind::kNone:
      break;
    case BaselineKind::kValue:
      for (const Component& c : comps) {
        const double beta = state.numer().col(0).dot(c.features);
        gn.col(0) += -2.0 * (c.weight - beta) * c.features;
      }
      break;
    case BaselineKind::kCOptimal:
    case BaselineKind::kCOptimalPerParam: {
      const Eigen::VectorXd g_sf = score_weighted(comps, m);
      const bool per = state.kind() == BaselineKind::kCOptimalPerParam;
      for (const Component& c : comps) {
        const int k = checked_key(c, state);
        if (per) {
          gn.row(k) += -2.0 * (g_sf.cwiseProduct(*c.score).transpose() - state.numer().row(k));
          gd.row(k) += -2.0 * (c.score->cwiseProduct(*c.score).transpose() - state.denom().row(k));
        } else {
          gn(k, 0) += -2.0 * (g_sf.dot(*c.score) - state.numer()(k, 0));
          gd(k, 0) += -2.0 * (c.score->squaredNorm() - state.denom()(k, 0));
        }
      }
      break;
    }
    case BaselineKind::kFnApprox: {
      const Eigen::VectorXd g_sf = score_weighted(comps, m);
      for (const Component& c : comps) {
        gn.col(0) += -2.0 * (g_sf.dot(*c.score) - state.numer().col(0).dot(c.features)) * c.features;
        gd.col(0) += -2.0 * (c.score->squaredNorm() - state.denom().col(0).dot(c.features)) * c.features;
      }
      break;
    }
    case BaselineKind::kDirect: {
      const Eigen::VectorXd g = apply_baseline(estimate, state, keys, trajectory, weights).gradient -
                                estimate.pathwise;
      for (const Component& c : comps) gn.col(0) += -2.0 * g.dot(*c.score) * c.features;
      break;
    }
  }
  return flatten(gn, gd);
}

void running_mean_step(BaselineState& state, const GradEstimate& estimate,
                       const ConditioningKey& keys, const Trajectory& trajectory,
                       const ComponentWeights& weights) {
  const std::vector<Component> comps = gather(estimate, keys, trajectory, weights, true);
  const Eigen::VectorXd g_sf = score_weighted(comps, state.param_dim());
  for (const Component& c : comps) {
    const int k = checked_key(c, state);
    const double rate = 1.0 / (state.counts()[k] += 1.0);
    switch (state.kind()) {
      case BaselineKind::kValue:
        state.numer()(k, 0) += rate * (c.weight - state.numer()(k, 0));
        break;
      case BaselineKind::kCOptimal:
        state.numer()(k, 0) += rate * (g_sf.dot(*c.score) - state.numer()(k, 0));
        state.denom()(k, 0) += rate * (c.score->squaredNorm() - state.denom()(k, 0));
        break;
      case BaselineKind::kCOptimalPerParam:
        state.numer().row(k) += rate * (g_sf.cwiseProduct(*c.score).transpose() - state.numer().row(k));
        state.denom().row(k) +=
            rate * (c.score->cwiseProduct(*c.score).transpose() - state.denom().row(k));
        break;
      default:
        throw ValidationError("running-mean updates are not defined for this baseline kind");
    }
  }
}

Eigen::VectorXd update_one(BaselineState& state, BaselineKind kind, const char* op,
                           const GradEstimate& estimate, const ConditioningKey& keys,
                           const Trajectory& trajectory, const ComponentWeights& weights) {
  require_kind(state, kind, op);
  const Eigen::VectorXd g = baseline_gradient(state, estimate, keys, trajectory, weights);
  if (state.rule() == UpdateRule::kRunningMean) {
    running_mean_step(state, estimate, keys, trajectory, weights);
  } else {
    state.set_parameters(state.parameters() - state.alpha() * g);
  }
  return g;
}

}  // namespace

BaselinedGradient apply_baseline(const GradEstimate& estimate, const BaselineState& state,
                                 const ConditioningKey& keys, const Trajectory& trajectory,
                                 const ComponentWeights& weights) {
  const int m = static_cast<int>(estimate.pathwise.size());
  if (state.param_dim() != m) {
    throw ValidationError("apply_baseline: baseline has " + std::to_string(state.param_dim()) +
                          " columns, estimate has " + std::to_string(m));
  }
  BaselinedGradient out;
  out.gradient = estimate.pathwise;
  out.experimental = !estimate.pathwise.isZero(0.0) && !estimate.score_components.empty() &&
                     state.kind() != BaselineKind::kNone;
  const std::vector<Component> comps =
      gather(estimate, keys, trajectory, weights, false);
  for (std::size_t j = 0; j < comps.size(); ++j) {
    const Component& c = comps[j];
    const BetaEval b = state.beta(keys, trajectory, estimate.score_components[j].step);
    out.cold_start = out.cold_start || b.cold_start;
    out.floored = out.floored || b.floored;
    out.gradient += (c.weight - b.beta.array()).matrix().cwiseProduct(*c.score);
  }
  if (!out.gradient.allFinite()) throw NumericalError("apply_baseline: non-finite gradient");
  return out;
}

Eigen::VectorXd update_value_baseline(BaselineState& state, const GradEstimate& estimate,
                                      const ConditioningKey& keys, const Trajectory& trajectory,
                                      const ComponentWeights& weights) {
  return update_one(state, BaselineKind::kValue, "update_value_baseline", estimate, keys,
                    trajectory, weights);
}

Eigen::VectorXd update_c_optimal(BaselineState& state, const GradEstimate& estimate,
                                 const ConditioningKey& keys, const Trajectory& trajectory,
                                 const ComponentWeights& weights) {
  return update_one(state, BaselineKind::kCOptimal, "update_c_optimal", estimate, keys, trajectory,
                    weights);
}

Eigen::VectorXd update_per_parameter(BaselineState& state, const GradEstimate& estimate,
                                     const ConditioningKey& keys, const Trajectory& trajectory,
                                     const ComponentWeights& weights) {
  return update_one(state, BaselineKind::kCOptimalPerParam, "update_per_parameter", estimate, keys,
                    trajectory, weights);
}

Eigen::VectorXd update_fn_approx(BaselineState& state, const GradEstimate& estimate,
                                 const ConditioningKey& keys, const Trajectory& trajectory,
                                 const ComponentWeights& weights) {
  return update_one(state, BaselineKind::kFnApprox, "update_fn_approx", estimate, keys, trajectory,
                    weights);
}

Eigen::VectorXd update_direct(BaselineState& state, const GradEstimate& estimate,
                              const ConditioningKey& keys, const Trajectory& trajectory,
                              const ComponentWeights& weights) {
  return update_one(state, BaselineKind::kDirect, "update_direct", estimate, keys, trajectory,
                    weights);
}

Eigen::VectorXd update_baseline(BaselineState& state, const ConditioningKey& keys,
                                const std::vector<BaselineObservation>& batch) {
  if (state.kind() == BaselineKind::kNone || batch.empty()) return Eigen::VectorXd();
  Eigen::VectorXd g = Eigen::VectorXd::Zero(state.parameters().size());
  for (const BaselineObservation& obs : batch) {
    g += baseline_gradient(state, *obs.estimate, keys, *obs.trajectory, obs.weights);
  }
  g /= static_cast<double>(batch.size());
  if (state.rule() == UpdateRule::kRunningMean) {
    for (const BaselineObservation& obs : batch) {
      running_mean_step(state, *obs.estimate, keys, *obs.trajectory, obs.weights);
    }
  } else {
    state.set_parameters(state.parameters() - state.alpha() * g);
  }
  return g;
}

ReturnMode parse_return_mode(const std::string& name) {
  if (name == "raw") return ReturnMode::kRaw;
  if (name == "discounted") return ReturnMode::kDiscounted;
  if (name == "bootstrap") return ReturnMode::kBootstrap;
  if (name == "gae") return ReturnMode::kGae;
  throw ValidationError("unknown return mode '" + name + "'");
}

std::vector<double> compute_returns(const std::vector<double>& step_losses,
                                    const std::vector<double>& next_values, const ReturnSpec& spec) {
  if (!(spec.gamma >= 0.0 && spec.gamma <= 1.0)) throw ValidationError("gamma must lie in [0, 1]");
  if (!(spec.kappa >= 0.0 && spec.kappa <= 1.0)) throw ValidationError("kappa must lie in [0, 1]");
  if (step_losses.empty()) throw ValidationError("compute_returns: no per-step losses");
  const int n = static_cast<int>(step_losses.size()) - 1;
  const bool needs_values = spec.mode == ReturnMode::kBootstrap || spec.mode == ReturnMode::kGae;
  if (needs_values && static_cast<int>(next_values.size()) != n + 1) {
    throw ValidationError("compute_returns: mode needs a value function");
  }
  auto next_value = [&](int i) { return i < n ? next_values[i] : 0.0; };
  std::vector<double> out(n + 1, 0.0);
  double carry = 0.0;
  for (int i = n; i >= 1; --i) {
    const double f = step_losses[i];
    switch (spec.mode) {
      case ReturnMode::kRaw:
        carry = f + carry;
        break;
      case ReturnMode::kDiscounted:
        carry = f + spec.gamma * carry;
        break;
      case ReturnMode::kBootstrap:
        carry = f + spec.gamma * next_value(i);
        break;
      case ReturnMode::kGae:
        carry = f + (1.0 - spec.kappa) * spec.gamma * next_value(i) + spec.gamma * spec.kappa * carry;
        break;
    }
    out[i] = carry;
  }
  return out;
}

std::vector<double> next_state_values(const BaselineState& value_state, const ConditioningKey& keys,
                                      const Trajectory& trajectory) {
  const int n = trajectory.steps();
  std::vector<double> out(n + 1, 0.0);
  for (int i = 1; i < n; ++i) out[i] = value_state.beta(keys, trajectory, i + 1).beta[0];
  return out;
}

ComponentWeights component_weights(const GradEstimate& estimate, const std::vector<double>& returns) {
  ComponentWeights w;
  w.reserve(estimate.score_components.size());
  for (const ScoreComponent& c : estimate.score_components) {
    if (c.step >= static_cast<int>(returns.size())) throw ValidationError("returns too short");
    w.push_back(returns[c.step]);
  }
  return w;
}

VarianceEstimate estimator_variance(const std::vector<Eigen::VectorXd>& samples) {
  if (samples.size() < 2) throw ValidationError("estimator_variance: need at least 2 samples");
  const double n = static_cast<double>(samples.size());
  VarianceEstimate out;
  out.mean = Eigen::VectorXd::Zero(samples.front().size());
  for (const auto& g : samples) out.mean += g;
  out.mean /= n;
  double sum = 0.0;
  double sum_sq = 0.0;
  for (const auto& g : samples) {
    const double d = (g - out.mean).squaredNorm();
    sum += d;
    sum_sq += d * d;
  }
  out.variance = sum / n;
  const double spread = std::max(0.0, sum_sq / n - out.variance * out.variance);
  out.standard_error = std::sqrt(spread / n);
  return out;
}

double exact_variance(const std::vector<Eigen::VectorXd>& values, const std::vector<double>& probs) {
  if (values.empty() || values.size() != probs.size()) {
    throw ValidationError("exact_variance: need one probability per value");
  }
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(values.front().size());
  for (std::size_t k = 0; k < values.size(); ++k) mean += probs[k] * values[k];
  double var = 0.0;
  for (std::size_t k = 0; k < values.size(); ++k) var += probs[k] * (values[k] - mean).squaredNorm();
  return var;
}

}  // namespace stochadj
