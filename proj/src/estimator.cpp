#include "stochadj/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <mutex>
#include <string>
#include <thread>

#include "stochadj/error.hpp"

namespace stochadj {

Eigen::VectorXd GradEstimate::score_part() const {
  Eigen::VectorXd g = Eigen::VectorXd::Zero(pathwise.size());
  for (const ScoreComponent& c : score_components) g += c.weight * c.score;
  return g;
}

Eigen::VectorXd GradEstimate::total() const { return pathwise + score_part(); }

AdjointWindow::AdjointWindow(int lag, int state_dim)
    : slots_(lag + 1, Eigen::VectorXd::Zero(state_dim)) {}

Eigen::VectorXd AdjointWindow::take(int step) {
  Eigen::VectorXd& slot = at(step);
  Eigen::VectorXd out = slot;
  slot.setZero();
  return out;
}

GradEstimate reverse_pass(const StepModel& model, const LossSpec& loss, const Eigen::VectorXd& theta,
                          const Trajectory& trajectory) {
  check_theta(model, theta);
  const ModelShape shape = model.shape();
  const int n = shape.steps;
  if (trajectory.steps() != n || trajectory.y.size() != trajectory.x.size() ||
      trajectory.z.size() != trajectory.x.size()) {
    throw ValidationError("reverse_pass: trajectory does not match the model");
  }

  GradEstimate est;
  est.pathwise = Eigen::VectorXd::Zero(shape.param_dim);
  est.objective = trajectory.objective;

  std::vector<Eigen::VectorXd> general_grad;
  std::vector<double> tail(n + 2, 0.0);
  if (loss.is_summable()) {
    est.step_losses = trajectory.step_losses;
    if (static_cast<int>(est.step_losses.size()) != n + 1) loss.evaluate(trajectory.x, &est.step_losses);
    for (int i = n; i >= 1; --i) tail[i] = tail[i + 1] + est.step_losses[i];
  } else {
    general_grad = loss.gradient(trajectory.x);
  }

  AdjointWindow window(shape.lag, shape.state_dim);
  std::vector<Eigen::VectorXd> d_lags(shape.lag);
  Eigen::VectorXd step_grad(shape.state_dim);

  for (int i = n; i >= 1; --i) {
    Eigen::VectorXd lambda = window.take(i);
    if (loss.is_summable()) {
      step_grad.setZero();
      loss.step_loss(i, trajectory.x[i], &step_grad);
      lambda += step_grad;
    } else {
      lambda += general_grad[i];
    }
    const double weight = loss.is_summable() ? tail[i] : trajectory.objective;

    const StateWindow states(trajectory.x, i, shape.lag);
    const StepInput in{i, states, theta, trajectory.y[i], trajectory.z[i]};
    for (auto& d : d_lags) d = Eigen::VectorXd::Zero(shape.state_dim);

    if (shape.has_pathwise && !lambda.isZero(0.0)) model.step_vjp(in, lambda, est.pathwise, d_lags);

    if (trajectory.y[i].size() > 0) {
      if (auto ld = model.log_density(in)) {
        if (ld->d_theta.size() != shape.param_dim || static_cast<int>(ld->d_lags.size()) != shape.lag) {
          throw ValidationError("reverse_pass: log-density partials have wrong shape at step " +
                                std::to_string(i));
        }
        est.score_components.push_back({i, weight, ld->d_theta});
        for (int l = 0; l < shape.lag; ++l) d_lags[l] += weight * ld->d_lags[l];
      }
    }
    if (model.at_kink(in)) est.nondifferentiable = true;

    for (int l = 1; l <= shape.lag && i - l >= 1; ++l) {
      if (!d_lags[l - 1].allFinite()) {
        throw NumericalError("non-finite adjoint at step " + std::to_string(i - l));
      }
      window.at(i - l) += d_lags[l - 1];
    }
  }
  std::reverse(est.score_components.begin(), est.score_components.end());
  if (!est.pathwise.allFinite()) throw NumericalError("non-finite pathwise gradient");
  return est;
}

void parallel_for(int count, int threads, const std::function<void(int)>& fn) {
  threads = std::max(1, std::min(threads, count));
  if (threads == 1) {
    for (int k = 0; k < count; ++k) fn(k);
    return;
  }
  std::exception_ptr failure;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      for (int k = t; k < count; k += threads) {
        try {
          fn(k);
        } catch (...) {
          std::lock_guard<std::mutex> lock(mu);
          if (!failure) failure = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

BatchEstimate estimate_gradient(const StepModel& model, const LossSpec& loss,
                                const Eigen::VectorXd& theta, const Eigen::VectorXd& x0, int batch,
                                std::uint64_t seed, int threads) {
  if (batch < 1) throw ValidationError("estimate_gradient: batch must be at least 1");
  BatchEstimate out;
  out.samples.resize(batch);
  parallel_for(batch, threads, [&](int k) {
    const Trajectory traj = simulate(model, loss, theta, x0, derive_seed(seed, k));
    out.samples[k] = reverse_pass(model, loss, theta, traj);
  });
  out.mean_gradient = Eigen::VectorXd::Zero(theta.size());
  for (const GradEstimate& g : out.samples) {
    out.mean_gradient += g.total();
    out.mean_objective += g.objective;
  }
  out.mean_gradient /= batch;
  out.mean_objective /= batch;
  return out;
}

Eigen::VectorXd deterministic_adjoint(const StepModel& model, const LossSpec& loss,
                                      const Eigen::VectorXd& theta, const Eigen::VectorXd& x0,
                                      std::uint64_t seed) {
  if (model.shape().has_score) {
    throw ValidationError("deterministic_adjoint: model declares score steps");
  }
  const Trajectory traj = simulate(model, loss, theta, x0, seed);
  return reverse_pass(model, loss, theta, traj).pathwise;
}

Eigen::VectorXd finite_difference_gradient(const std::function<double(const Eigen::VectorXd&)>& objective,
                                           const Eigen::VectorXd& theta, double h) {
  if (!(h > 0.0)) throw ValidationError("finite_difference_gradient: step must be positive");
  Eigen::VectorXd grad(theta.size());
  Eigen::VectorXd probe = theta;
  for (Eigen::Index j = 0; j < theta.size(); ++j) {
    probe[j] = theta[j] + h;
    const double up = objective(probe);
    probe[j] = theta[j] - h;
    const double down = objective(probe);
    probe[j] = theta[j];
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericalError("finite_difference_gradient: non-finite objective at coordinate " +
                           std::to_string(j));
    }
    grad[j] = (up - down) / (2.0 * h);
  }
  return grad;
}

}  // namespace stochadj
