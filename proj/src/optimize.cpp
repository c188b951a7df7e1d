#include "stochadj/optimize.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "stochadj/error.hpp"
#include "stochadj/estimator.hpp"
#include "stochadj/oracle.hpp"
#include "stochadj/rng.hpp"

namespace stochadj {

void validate(const SgdConfig& c) {
  if (!(c.alpha_theta > 0.0)) throw ValidationError("sgd.alpha_theta: must be positive");
  if (!(c.alpha_phi > 0.0)) throw ValidationError("sgd.alpha_phi: must be positive");
  if (c.iterations < 1) throw ValidationError("sgd.iterations: must be at least 1");
  if (c.batch < 1) throw ValidationError("sgd.batch: must be at least 1");
  if (c.replications < 1) throw ValidationError("sgd.replications: must be at least 1");
  if (!(c.returns.gamma >= 0.0 && c.returns.gamma <= 1.0)) throw ValidationError("returns.gamma: must lie in [0, 1]");
  if (!(c.returns.kappa >= 0.0 && c.returns.kappa <= 1.0)) throw ValidationError("returns.kappa: must lie in [0, 1]");
}

Eigen::VectorXd sgd_step(const Eigen::VectorXd& theta, const Eigen::VectorXd& gradient, double alpha,
                         Sense sense) {
  return sense == Sense::kMinimize ? Eigen::VectorXd(theta - alpha * gradient)
                                   : Eigen::VectorXd(theta + alpha * gradient);
}

RunHistory sgd_run(const Problem& problem, const SgdConfig& config) {
  validate(config);
  const StepModel& model = *problem.model;
  const int m = model.shape().param_dim;
  Eigen::VectorXd theta = config.theta0.size() ? config.theta0 : problem.theta0.values();
  check_theta(model, theta);

  const bool needs_keys = config.baseline != BaselineKind::kNone;
  const std::optional<ConditioningKey> key_opt = config.keys ? config.keys : problem.keys;
  if (needs_keys && !key_opt) throw ValidationError("sgd.baseline: problem has no conditioning key");
  const ConditioningKey keys = key_opt ? *key_opt : constant_key();
  BaselineState baseline = BaselineState::make(config.baseline, keys, m, config.alpha_phi, config.baseline_rule);

  const ReturnMode mode = config.returns.mode;
  if (mode != ReturnMode::kRaw && !problem.loss.is_summable()) {
    throw ValidationError("returns.mode: needs a summable loss");
  }
  if ((mode == ReturnMode::kBootstrap || mode == ReturnMode::kGae) && config.baseline != BaselineKind::kValue) {
    throw ValidationError("returns.mode: bootstrap and gae need the value baseline");
  }
  if (config.track_exact_variance && !problem.enumerable) {
    throw ValidationError("sgd.track_exact_variance: problem is not enumerable");
  }

  RunHistory h;
  for (int k = 0; k < config.iterations; ++k) {
    const std::uint64_t seed = derive_seed(config.seed, static_cast<std::uint64_t>(k));
    std::vector<Trajectory> trajs(config.batch);
    std::vector<GradEstimate> ests(config.batch);
    std::vector<BaselineObservation> obs;
    Eigen::VectorXd g = Eigen::VectorXd::Zero(m);
    double objective = 0.0;
    for (int b = 0; b < config.batch; ++b) {
      trajs[b] = simulate(model, problem.loss, theta, problem.x0, derive_seed(seed, static_cast<std::uint64_t>(b)));
      ests[b] = reverse_pass(model, problem.loss, theta, trajs[b]);
      ComponentWeights weights;
      if (mode != ReturnMode::kRaw) {
        std::vector<double> next;
        if (mode != ReturnMode::kDiscounted) next = next_state_values(baseline, keys, trajs[b]);
        weights = component_weights(ests[b], compute_returns(ests[b].step_losses, next, config.returns));
      }
      g += apply_baseline(ests[b], baseline, keys, trajs[b], weights).gradient;
      objective += ests[b].objective;
      obs.push_back({nullptr, nullptr, std::move(weights)});
    }
    g /= config.batch;
    objective /= config.batch;

    double variance = std::numeric_limits<double>::quiet_NaN();
    if (config.track_exact_variance) {
      variance = with_baseline(enumerate(model, problem.loss, theta, problem.x0), baseline, keys).variance;
    }

    h.theta.push_back(theta);
    h.objective.push_back(objective);
    h.gradient.push_back(g);
    h.exact_variance.push_back(variance);
    h.metric.push_back(problem.metric ? problem.metric(theta) : std::numeric_limits<double>::quiet_NaN());

    if (config.baseline != BaselineKind::kNone) {
      for (int b = 0; b < config.batch; ++b) {
        obs[b].estimate = &ests[b];
        obs[b].trajectory = &trajs[b];
      }
      update_baseline(baseline, keys, obs);
    }
    h.baseline_params.push_back(baseline.parameters());

    Eigen::VectorXd next =
        config.freeze_theta ? theta : problem.projected(sgd_step(theta, g, config.alpha_theta, problem.sense));
    if (!next.allFinite() || !baseline.parameters().allFinite()) {
      h.aborted = true;
      h.abort_reason = "non-finite iterate after iteration " + std::to_string(k);
      break;
    }
    theta = std::move(next);
  }
  h.final_theta = theta;
  h.final_baseline = baseline;
  return h;
}

std::vector<RunHistory> sgd_replications(const Problem& problem, const SgdConfig& config, int threads) {
  validate(config);
  std::vector<RunHistory> out(config.replications);
  parallel_for(config.replications, threads, [&](int r) {
    SgdConfig c = config;
    c.seed = derive_seed(config.seed, static_cast<std::uint64_t>(r));
    out[r] = sgd_run(problem, c);
  });
  return out;
}

namespace {

struct Scaled {
  Eigen::VectorXd lo, width;
  Eigen::VectorXd to_theta(const Eigen::VectorXd& u) const { return lo + width.cwiseProduct(u); }
  Eigen::VectorXd to_unit(const Eigen::VectorXd& t) const { return (t - lo).cwiseQuotient(width); }
};

Eigen::VectorXd clamp_unit(const Eigen::VectorXd& u) {
  return u.cwiseMax(0.0).cwiseMin(1.0);
}

}  // namespace

GdResult gd_calibrate(const Problem& problem, const Eigen::VectorXd& theta0, const GdConfig& config) {
  const StepModel& model = *problem.model;
  const ModelShape shape = model.shape();
  if (shape.has_score) throw ValidationError("gd_calibrate: problem has score steps");
  const int m = shape.param_dim;
  if (theta0.size() != m) throw ValidationError("gd_calibrate.theta0: wrong length");
  if (config.lower.size() != m || config.upper.size() != m) throw ValidationError("gd_calibrate.bounds: wrong length");
  if (!config.lower.allFinite() || !config.upper.allFinite()) throw ValidationError("gd_calibrate.bounds: must be finite");
  if ((config.lower.array() > config.upper.array()).any()) throw ValidationError("gd_calibrate.bounds: lower > upper");
  if (config.max_iterations < 1) throw ValidationError("gd_calibrate.max_iterations: must be at least 1");
  if (!(config.shrink > 0.0 && config.shrink < 1.0)) throw ValidationError("gd_calibrate.shrink: must lie in (0, 1)");

  Scaled sc{config.lower, (config.upper - config.lower).cwiseMax(1e-300)};
  auto loss_at = [&](const Eigen::VectorXd& u) {
    return simulate_objective(model, problem.loss, sc.to_theta(u), problem.x0, 0);
  };
  auto grad_at = [&](const Eigen::VectorXd& u) {
    return Eigen::VectorXd(deterministic_adjoint(model, problem.loss, sc.to_theta(u), problem.x0, 0)
                               .cwiseProduct(sc.width));
  };

  GdResult r;
  Eigen::VectorXd u = clamp_unit(sc.to_unit(theta0));
  double f = loss_at(u);
  double step = 1.0;
  r.loss_history.push_back(f);
  for (int it = 0; it < config.max_iterations; ++it) {
    const Eigen::VectorXd g = grad_at(u);
    r.projected_gradient_norm = (clamp_unit(u - g) - u).norm();
    if (r.projected_gradient_norm < config.tolerance) {
      r.converged = true;
      break;
    }
    bool accepted = false;
    double t = std::min(1e6, 2.0 * step);
    for (int b = 0; b < config.max_backtracks; ++b) {
      const Eigen::VectorXd cand = clamp_unit(u - t * g);
      const double fc = loss_at(cand);
      if (std::isfinite(fc) && fc <= f + config.armijo * g.dot(cand - u)) {
        u = cand;
        f = fc;
        step = t;
        accepted = true;
        break;
      }
      t *= config.shrink;
    }
    r.iterations = it + 1;
    r.loss_history.push_back(f);
    if (!accepted) {
      r.line_search_failed = true;
      break;
    }
  }
  r.theta = sc.to_theta(u);
  r.loss = f;
  return r;
}

CostSample measure_gradient_cost(const Problem& problem, const Eigen::VectorXd& theta, int repeats) {
  if (repeats < 1) throw ValidationError("cost.repeats: must be at least 1");
  const StepModel& model = *problem.model;
  using clock = std::chrono::steady_clock;
  auto median_time = [&](const std::function<void()>& fn) {
    std::vector<double> t;
    for (int k = 0; k < repeats; ++k) {
      const auto start = clock::now();
      fn();
      t.push_back(std::chrono::duration<double>(clock::now() - start).count());
    }
    std::nth_element(t.begin(), t.begin() + t.size() / 2, t.end());
    return t[t.size() / 2];
  };
  volatile double sink = 0.0;
  CostSample s;
  s.param_dim = static_cast<int>(theta.size());
  s.t_objective = median_time([&] { sink = sink + simulate_objective(model, problem.loss, theta, problem.x0, 0); });
  s.t_adjoint = median_time([&] { sink = sink + deterministic_adjoint(model, problem.loss, theta, problem.x0, 0)[0]; });
  auto objective = [&](const Eigen::VectorXd& th) { return simulate_objective(model, problem.loss, th, problem.x0, 0); };
  s.t_fd = median_time([&] { sink = sink + finite_difference_gradient(objective, theta, 1e-6)[0]; });
  return s;
}

}  // namespace stochadj
