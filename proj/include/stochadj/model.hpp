#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stochadj/rng.hpp"

namespace stochadj {

struct ModelShape {
  int steps = 0;         // n
  int lag = 1;           // number of past states each step reads
  int state_dim = 0;
  int param_dim = 0;     // m
  bool has_score = false;
  bool has_pathwise = false;
};

/// The last `lag` states seen by step i: lag(1) is x_{i-1}, lag(l) is
/// x_{i-l}. Indices before 0 resolve to x_0.
class StateWindow {
 public:
  StateWindow(const std::vector<Eigen::VectorXd>& states, int step, int lag);

  const Eigen::VectorXd& lag(int l) const { return *lags_[l - 1]; }
  const Eigen::VectorXd& previous() const { return *lags_[0]; }
  int size() const { return static_cast<int>(lags_.size()); }

 private:
  std::vector<const Eigen::VectorXd*> lags_;
};

struct StepInput {
  int step;  // 1-based
  const StateWindow& window;
  const Eigen::VectorXd& theta;
  const Eigen::VectorXd& y;  // empty when the step draws nothing from a density
  const Eigen::VectorXd& z;  // empty when the step has no pathwise noise
};

struct StepDraw {
  Eigen::VectorXd z;
  Eigen::VectorXd y;
};

struct LogDensity {
  double value = 0.0;
  Eigen::VectorXd d_theta;
  std::vector<Eigen::VectorXd> d_lags;  // d_lags[l-1] is the partial wrt x_{i-l}
};

struct Outcome {
  Eigen::VectorXd y;
  double probability;
};

/// One sequential stochastic model: x_i = h_i(window, theta, y_i, z_i) with
/// y_i ~ p_i(. | window, theta, z_i). Implementations are immutable and may
/// be shared across threads.
class StepModel {
 public:
  virtual ~StepModel() = default;

  virtual ModelShape shape() const = 0;

  // Draws z_i and y_i. The y and z fields of `in` are empty here.
  virtual StepDraw draw(const StepInput& in, Rng& rng) const = 0;

  virtual Eigen::VectorXd step(const StepInput& in) const = 0;

  // log p_i(y_i) and its partials; nullopt on steps without a density.
  virtual std::optional<LogDensity> log_density(const StepInput& in) const;

  // Adds lambda^T dh_i/dtheta to d_theta and lambda^T dh_i/dx_{i-l} to
  // d_lags[l-1].
  virtual void step_vjp(const StepInput& in, const Eigen::VectorXd& lambda,
                        Eigen::VectorXd& d_theta, std::vector<Eigen::VectorXd>& d_lags) const = 0;

  // Finite support of y_i with probabilities. Models without one throw.
  virtual std::vector<Outcome> support(const StepInput& in) const;

  // True where h_i or p_i is not differentiable at the recorded point.
  virtual bool at_kink(const StepInput& in) const;
};

/// Objective over x_1..x_n: either a general function or a sum of per-step
/// terms f_i(x_i). State vectors are passed as x_0..x_n.
class LossSpec {
 public:
  // Returns F and, when `grad` is non-null, fills grad[i] = dF/dx_i.
  using GeneralFn =
      std::function<double(const std::vector<Eigen::VectorXd>& x, std::vector<Eigen::VectorXd>* grad)>;
  // Returns f_i(x_i) and, when `grad` is non-null, its derivative.
  using StepFn = std::function<double(int step, const Eigen::VectorXd& x, Eigen::VectorXd* grad)>;

  static LossSpec general(GeneralFn fn);
  static LossSpec summable(StepFn fn);

  bool is_summable() const { return static_cast<bool>(step_fn_); }

  // Total objective; per-step terms are written to `step_losses` (slot 0
  // unused) for summable losses.
  double evaluate(const std::vector<Eigen::VectorXd>& x, std::vector<double>* step_losses) const;
  // dF/dx_i for i = 0..n (slot 0 is zero).
  std::vector<Eigen::VectorXd> gradient(const std::vector<Eigen::VectorXd>& x) const;
  double step_loss(int step, const Eigen::VectorXd& x, Eigen::VectorXd* grad) const;

 private:
  GeneralFn general_fn_;
  StepFn step_fn_;
};

/// Recorded forward pass. Per-step vectors use 1-based slots: y[i] is y_i
/// and slot 0 is unused. x has n+1 entries starting from x_0.
struct Trajectory {
  std::vector<Eigen::VectorXd> x;
  std::vector<Eigen::VectorXd> z;
  std::vector<Eigen::VectorXd> y;
  std::vector<double> logp;         // NaN on steps without a density
  std::vector<double> step_losses;  // filled for summable losses
  double objective = 0.0;

  int steps() const { return static_cast<int>(x.size()) - 1; }
};

struct ParamSlice {
  std::string name;
  int offset;
  int size;
};

/// Flat parameter vector with named slices per model component.
class ParamVector {
 public:
  ParamVector() = default;
  ParamVector(Eigen::VectorXd values, std::vector<ParamSlice> slices);

  const Eigen::VectorXd& values() const { return values_; }
  int size() const { return static_cast<int>(values_.size()); }
  const std::vector<ParamSlice>& slices() const { return slices_; }
  Eigen::VectorXd slice(const std::string& name) const;
  // Name of the slice holding coordinate j, with an index suffix when the
  // slice has more than one entry.
  std::string coordinate_name(int j) const;

 private:
  Eigen::VectorXd values_;
  std::vector<ParamSlice> slices_;
};

Trajectory simulate(const StepModel& model, const LossSpec& loss, const Eigen::VectorXd& theta,
                    const Eigen::VectorXd& x0, std::uint64_t seed);

// Same draws as simulate with the same seed, but only the objective; skips
// the log densities.
double simulate_objective(const StepModel& model, const LossSpec& loss, const Eigen::VectorXd& theta,
                          const Eigen::VectorXd& x0, std::uint64_t seed);

// Re-runs the steps with the stored y and z, possibly at a different theta.
Trajectory replay(const StepModel& model, const LossSpec& loss, const Eigen::VectorXd& theta,
                  const Trajectory& recorded);

void check_theta(const StepModel& model, const Eigen::VectorXd& theta);

}  // namespace stochadj
