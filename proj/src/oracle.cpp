#include "stochadj/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>

#include "stochadj/error.hpp"

namespace stochadj {
namespace {

struct Walker {
  const StepModel& model;
  const LossSpec& loss;
  const Eigen::VectorXd& theta;
  std::size_t max_paths;
  ModelShape shape;
  Trajectory current;
  std::vector<EnumeratedPath> paths;

  void descend(int i, double probability) {
    if (i > shape.steps) {
      if (paths.size() >= max_paths) {
        throw ValidationError("enumerate: more than " + std::to_string(max_paths) + " paths");
      }
      Trajectory t = current;
      t.objective = loss.evaluate(t.x, &t.step_losses);
      if (!std::isfinite(t.objective)) throw NumericalError("enumerate: non-finite objective");
      EnumeratedPath p;
      p.estimate = reverse_pass(model, loss, theta, t);
      p.gradient = p.estimate.total();
      p.trajectory = std::move(t);
      p.probability = probability;
      paths.push_back(std::move(p));
      return;
    }
    const Eigen::VectorXd empty;
    const StateWindow window(current.x, i, shape.lag);
    const std::vector<Outcome> outcomes = model.support(StepInput{i, window, theta, empty, empty});
    for (const Outcome& o : outcomes) {
      if (o.probability == 0.0) continue;
      current.y[i] = o.y;
      current.z[i] = Eigen::VectorXd();
      const StepInput in{i, window, theta, current.y[i], current.z[i]};
      current.x[i] = model.step(in);
      if (!current.x[i].allFinite()) {
        throw NumericalError("enumerate: non-finite state at step " + std::to_string(i));
      }
      auto lp = model.log_density(in);
      current.logp[i] = lp ? lp->value : std::numeric_limits<double>::quiet_NaN();
      descend(i + 1, probability * o.probability);
    }
  }
};

void summarize(EnumerationReport& report) {
  double total_p = 0.0;
  report.expected_objective = 0.0;
  report.expected_gradient = Eigen::VectorXd::Zero(report.paths.front().gradient.size());
  std::vector<Eigen::VectorXd> values;
  std::vector<double> probs;
  for (const EnumeratedPath& p : report.paths) {
    total_p += p.probability;
    report.expected_objective += p.probability * p.trajectory.objective;
    report.expected_gradient += p.probability * p.gradient;
    values.push_back(p.gradient);
    probs.push_back(p.probability);
  }
  if (std::abs(total_p - 1.0) > 1e-12) {
    throw NumericalError("enumerate: path probabilities sum to " + std::to_string(total_p));
  }
  report.variance = exact_variance(values, probs);
}

}  // namespace

EnumerationReport enumerate(const StepModel& model, const LossSpec& loss, const Eigen::VectorXd& theta,
                            const Eigen::VectorXd& x0, std::size_t max_paths) {
  check_theta(model, theta);
  Walker w{model, loss, theta, max_paths, model.shape(), {}, {}};
  if (x0.size() != w.shape.state_dim) throw ValidationError("enumerate: x0 dimension mismatch");
  const int n = w.shape.steps;
  w.current.x.assign(n + 1, Eigen::VectorXd());
  w.current.x[0] = x0;
  w.current.y.assign(n + 1, Eigen::VectorXd());
  w.current.z.assign(n + 1, Eigen::VectorXd());
  w.current.logp.assign(n + 1, std::numeric_limits<double>::quiet_NaN());
  w.descend(1, 1.0);
  EnumerationReport report;
  report.paths = std::move(w.paths);
  summarize(report);
  return report;
}

EnumerationReport with_baseline(const EnumerationReport& report, const BaselineState& state,
                                const ConditioningKey& keys) {
  EnumerationReport out = report;
  out.cold_start = false;
  for (EnumeratedPath& p : out.paths) {
    const BaselinedGradient b = apply_baseline(p.estimate, state, keys, p.trajectory);
    p.gradient = b.gradient;
    out.cold_start = out.cold_start || b.cold_start;
  }
  summarize(out);
  return out;
}

const char* exact_baseline_name(ExactBaseline kind) {
  switch (kind) {
    case ExactBaseline::kValue: return "value";
    case ExactBaseline::kOptimal: return "optimal";
    case ExactBaseline::kOptimalPerParam: return "optimal_per_param";
    case ExactBaseline::kQFunction: return "q_function";
  }
  return "?";
}

BaselineState exact_baseline(const EnumerationReport& report, const ConditioningKey& keys,
                             ExactBaseline kind) {
  if (!keys.is_tabular()) throw ValidationError("exact baselines need a tabular key");
  const int c = keys.key_count();
  const int m = static_cast<int>(report.expected_gradient.size());

  if (kind == ExactBaseline::kOptimal || kind == ExactBaseline::kOptimalPerParam) {
    const bool per = kind == ExactBaseline::kOptimalPerParam;
    BaselineState s = BaselineState::c_optimal(keys, m, 1.0, per);
    for (const EnumeratedPath& p : report.paths) {
      const Eigen::VectorXd g_sf = p.estimate.score_part();
      for (const ScoreComponent& sc : p.estimate.score_components) {
        const int k = keys.key(p.trajectory, sc.step);
        if (k < 0 || k >= c) throw ValidationError("exact_baseline: key outside the table");
        if (per) {
          s.numer().row(k) += p.probability * g_sf.cwiseProduct(sc.score).transpose();
          s.denom().row(k) += p.probability * sc.score.cwiseProduct(sc.score).transpose();
        } else {
          s.numer()(k, 0) += p.probability * g_sf.dot(sc.score);
          s.denom()(k, 0) += p.probability * sc.score.squaredNorm();
        }
      }
    }
    return s;
  }

  // Conditional expectation of each component weight given y_1..y_j, for Q.
  std::map<std::pair<int, std::vector<double>>, std::pair<double, double>> q_moments;
  auto prefix_of = [](const Trajectory& t, int j) {
    std::pair<int, std::vector<double>> key{j, {}};
    for (int i = 1; i <= j; ++i) key.second.insert(key.second.end(), t.y[i].data(), t.y[i].data() + t.y[i].size());
    return key;
  };
  if (kind == ExactBaseline::kQFunction) {
    for (const EnumeratedPath& p : report.paths) {
      for (const ScoreComponent& sc : p.estimate.score_components) {
        auto& acc = q_moments[prefix_of(p.trajectory, sc.step)];
        acc.first += p.probability * sc.weight;
        acc.second += p.probability;
      }
    }
  }

  Eigen::VectorXd num = Eigen::VectorXd::Zero(c);
  Eigen::VectorXd den = Eigen::VectorXd::Zero(c);
  for (const EnumeratedPath& p : report.paths) {
    for (const ScoreComponent& sc : p.estimate.score_components) {
      const int k = keys.key(p.trajectory, sc.step);
      if (k < 0 || k >= c) throw ValidationError("exact_baseline: key outside the table");
      if (kind == ExactBaseline::kValue) {
        num[k] += p.probability * sc.weight;
        den[k] += p.probability;
      } else {
        const auto& acc = q_moments.at(prefix_of(p.trajectory, sc.step));
        const double q = acc.first / acc.second;
        const double norm2 = sc.score.squaredNorm();
        num[k] += p.probability * q * norm2;
        den[k] += p.probability * norm2;
      }
    }
  }
  BaselineState s = BaselineState::value(keys, m, 1.0);
  for (int k = 0; k < c; ++k) s.numer()(k, 0) = den[k] > 0.0 ? num[k] / den[k] : 0.0;
  return s;
}

BaselineState exact_optimal_baselines(const StepModel& model, const LossSpec& loss,
                                      const Eigen::VectorXd& theta, const Eigen::VectorXd& x0,
                                      const ConditioningKey& keys, bool per_parameter) {
  return exact_baseline(enumerate(model, loss, theta, x0), keys,
                        per_parameter ? ExactBaseline::kOptimalPerParam : ExactBaseline::kOptimal);
}

namespace {

double objective_at(const StepModel& model, const LossSpec& loss, const Eigen::VectorXd& theta,
                    const Eigen::VectorXd& x0, std::uint64_t seed) {
  return simulate_objective(model, loss, theta, x0, seed);
}

}  // namespace

CrnReport crn_fd_check(const StepModel& model, const LossSpec& loss, const Eigen::VectorXd& theta,
                       const Eigen::VectorXd& x0, double h, int samples, std::uint64_t seed,
                       int threads) {
  if (!(h > 0.0)) throw ValidationError("crn_fd_check: h must be positive");
  if (samples < 1) throw ValidationError("crn_fd_check: need at least one sample");
  if (model.shape().has_score) throw ValidationError("crn_fd_check: model has score steps");
  const int m = static_cast<int>(theta.size());
  std::vector<Eigen::VectorXd> grads(samples);
  std::vector<Eigen::VectorXd> diffs(samples, Eigen::VectorXd::Zero(m));
  parallel_for(samples, threads, [&](int k) {
    const std::uint64_t s = derive_seed(seed, k);
    const Trajectory t = simulate(model, loss, theta, x0, s);
    grads[k] = reverse_pass(model, loss, theta, t).total();
    Eigen::VectorXd probe = theta;
    for (int j = 0; j < m; ++j) {
      probe[j] = theta[j] + h;
      const double up = replay(model, loss, probe, t).objective;
      probe[j] = theta[j] - h;
      const double down = replay(model, loss, probe, t).objective;
      probe[j] = theta[j];
      diffs[k][j] = up - down;
    }
  });
  CrnReport r;
  r.mean_gradient = Eigen::VectorXd::Zero(m);
  r.fd_gradient = Eigen::VectorXd::Zero(m);
  for (int k = 0; k < samples; ++k) {
    r.mean_gradient += grads[k];
    r.fd_gradient += diffs[k];
  }
  r.mean_gradient /= samples;
  r.fd_gradient /= 2.0 * h * samples;
  r.coordinate_gap = (r.mean_gradient - r.fd_gradient).cwiseAbs().cwiseQuotient(
      r.fd_gradient.cwiseAbs().cwiseMax(std::numeric_limits<double>::min()));
  const double scale = r.fd_gradient.norm();
  r.relative_gap = scale > 0.0 ? (r.mean_gradient - r.fd_gradient).norm() / scale
                               : (r.mean_gradient - r.fd_gradient).norm();
  return r;
}

UnbiasednessReport statistical_unbiasedness_test(const StepModel& model, const LossSpec& loss,
                                                 const Eigen::VectorXd& theta,
                                                 const Eigen::VectorXd& x0, int samples, double h,
                                                 std::uint64_t seed, int threads,
                                                 GradientReader reader) {
  if (samples < kMinUnbiasednessSamples) {
    throw ValidationError("statistical_unbiasedness_test: need at least " +
                          std::to_string(kMinUnbiasednessSamples) + " samples");
  }
  if (!(h > 0.0)) throw ValidationError("statistical_unbiasedness_test: h must be positive");
  if (!reader) reader = [](const GradEstimate& g) { return g.total(); };
  const int m = static_cast<int>(theta.size());
  std::vector<Eigen::VectorXd> grads(samples);
  std::vector<Eigen::VectorXd> diffs(samples, Eigen::VectorXd::Zero(m));
  parallel_for(samples, threads, [&](int k) {
    const std::uint64_t gs = derive_seed(seed, 0, k);
    const Trajectory t = simulate(model, loss, theta, x0, gs);
    grads[k] = reader(reverse_pass(model, loss, theta, t));
    const std::uint64_t fs = derive_seed(seed, 1, k);
    Eigen::VectorXd probe = theta;
    for (int j = 0; j < m; ++j) {
      probe[j] = theta[j] + h;
      const double up = objective_at(model, loss, probe, x0, fs);
      probe[j] = theta[j] - h;
      const double down = objective_at(model, loss, probe, x0, fs);
      probe[j] = theta[j];
      diffs[k][j] = (up - down) / (2.0 * h);
    }
  });

  auto moments = [samples, m](const std::vector<Eigen::VectorXd>& v, Eigen::VectorXd& mean,
                              Eigen::VectorXd& se) {
    mean = Eigen::VectorXd::Zero(m);
    for (const auto& x : v) mean += x;
    mean /= samples;
    Eigen::VectorXd ss = Eigen::VectorXd::Zero(m);
    for (const auto& x : v) ss += (x - mean).cwiseAbs2();
    se = (ss / (samples - 1.0) / samples).cwiseSqrt();
  };
  UnbiasednessReport r;
  moments(grads, r.mean_gradient, r.gradient_se);
  moments(diffs, r.fd_gradient, r.fd_se);
  r.z = Eigen::VectorXd::Zero(m);
  r.passed = true;
  for (int j = 0; j < m; ++j) {
    const double diff = r.mean_gradient[j] - r.fd_gradient[j];
    const double se = std::hypot(r.gradient_se[j], r.fd_se[j]);
    if (se > 0.0) {
      r.z[j] = diff / se;
    } else {
      const double tol = 1e-9 * std::max(1.0, std::abs(r.fd_gradient[j]));
      r.z[j] = std::abs(diff) <= tol ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), diff);
    }
    if (!(std::abs(r.z[j]) < kZGate)) r.passed = false;
  }
  return r;
}

}  // namespace stochadj

namespace stochadj {

namespace {

struct PointEval {
  const StepModel& model;
  int step;
  int lag;
  const Eigen::VectorXd& y;
  const Eigen::VectorXd& z;

  Eigen::VectorXd next(const std::vector<Eigen::VectorXd>& x, const Eigen::VectorXd& theta) const {
    const StateWindow w(x, step, lag);
    return model.step({step, w, theta, y, z});
  }
  std::optional<LogDensity> logp(const std::vector<Eigen::VectorXd>& x, const Eigen::VectorXd& theta) const {
    const StateWindow w(x, step, lag);
    return model.log_density({step, w, theta, y, z});
  }
};

void record_gap(PartialsReport& r, double analytic, double fd, const std::string& what) {
  const double gap = std::abs(analytic - fd) / std::max({std::abs(analytic), std::abs(fd), 1.0});
  ++r.checked;
  if (gap > r.max_gap || r.worst.empty()) {
    r.max_gap = std::max(gap, r.max_gap);
    r.worst = what;
  }
}

}  // namespace

PartialsReport check_step_partials(const StepModel& model, const LossSpec& loss, const Eigen::VectorXd& theta,
                                   const Eigen::VectorXd& x0, int points, std::uint64_t seed,
                                   const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& project,
                                   double spread, double h) {
  if (points < 1) throw ValidationError("check_step_partials: points must be positive");
  if (!(h > 0.0)) throw ValidationError("check_step_partials: h must be positive");
  const ModelShape shape = model.shape();
  PartialsReport r;
  for (int p = 0; p < points; ++p) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(p)));
    Eigen::VectorXd th = theta;
    for (int j = 0; j < th.size(); ++j) th[j] += spread * std::max(std::abs(th[j]), 0.1) * rng.normal();
    if (project) th = project(th);
    const Trajectory traj = simulate(model, loss, th, x0, derive_seed(seed, static_cast<std::uint64_t>(p), 1));
    const int i = 1 + std::min(shape.steps - 1, static_cast<int>(rng.uniform() * shape.steps));
    const PointEval ev{model, i, shape.lag, traj.y[i], traj.z[i]};
    std::vector<Eigen::VectorXd> x(traj.x.begin(), traj.x.begin() + i);
    {
      const StateWindow w(x, i, shape.lag);
      if (model.at_kink({i, w, th, traj.y[i], traj.z[i]})) continue;
    }
    ++r.points;
    const std::string where = "point " + std::to_string(p) + " step " + std::to_string(i);

    Eigen::VectorXd lambda(shape.state_dim);
    for (int c = 0; c < shape.state_dim; ++c) lambda[c] = rng.normal();
    Eigen::VectorXd d_theta = Eigen::VectorXd::Zero(shape.param_dim);
    std::vector<Eigen::VectorXd> d_lags(shape.lag, Eigen::VectorXd::Zero(shape.state_dim));
    {
      const StateWindow w(x, i, shape.lag);
      model.step_vjp({i, w, th, traj.y[i], traj.z[i]}, lambda, d_theta, d_lags);
    }
    const std::optional<LogDensity> ld = ev.logp(x, th);

    auto step_of = [&](double eps) { return h * std::max(1.0, std::abs(eps)); };
    for (int j = 0; j < th.size(); ++j) {
      const double hj = step_of(th[j]);
      Eigen::VectorXd tp = th, tm = th;
      tp[j] += hj;
      tm[j] -= hj;
      record_gap(r, d_theta[j], lambda.dot(ev.next(x, tp) - ev.next(x, tm)) / (2 * hj),
                 where + " vjp theta[" + std::to_string(j) + "]");
      if (ld) {
        record_gap(r, ld->d_theta[j], (ev.logp(x, tp)->value - ev.logp(x, tm)->value) / (2 * hj),
                   where + " logp theta[" + std::to_string(j) + "]");
      }
    }
    // Past states: slot l reads x_{max(i-l, 0)}.
    for (int s = std::max(0, i - shape.lag); s < i; ++s) {
      Eigen::VectorXd a_vjp = Eigen::VectorXd::Zero(shape.state_dim);
      Eigen::VectorXd a_logp = Eigen::VectorXd::Zero(shape.state_dim);
      for (int l = 1; l <= shape.lag; ++l) {
        if (std::max(i - l, 0) != s) continue;
        a_vjp += d_lags[l - 1];
        if (ld) a_logp += ld->d_lags[l - 1];
      }
      for (int c = 0; c < shape.state_dim; ++c) {
        const double hc = step_of(x[s][c]);
        std::vector<Eigen::VectorXd> xp = x, xm = x;
        xp[s][c] += hc;
        xm[s][c] -= hc;
        record_gap(r, a_vjp[c], lambda.dot(ev.next(xp, th) - ev.next(xm, th)) / (2 * hc),
                   where + " vjp x" + std::to_string(s) + "[" + std::to_string(c) + "]");
        if (ld) {
          record_gap(r, a_logp[c], (ev.logp(xp, th)->value - ev.logp(xm, th)->value) / (2 * hc),
                     where + " logp x" + std::to_string(s) + "[" + std::to_string(c) + "]");
        }
      }
    }
  }
  return r;
}

}  // namespace stochadj
