#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "stochadj/model.hpp"

namespace stochadj {

struct ScoreComponent {
  int step;
  double weight;          // F for a general loss, sum_{j>=i} f_j for a summable one
  Eigen::VectorXd score;  // d log p_i / d theta
};

/// One gradient sample, split into the adjoint (pathwise) part and the
/// unreduced score-function terms so baselines can reweight them later.
struct GradEstimate {
  Eigen::VectorXd pathwise;
  std::vector<ScoreComponent> score_components;
  double objective = 0.0;
  std::vector<double> step_losses;  // summable losses only, slot 0 unused
  bool nondifferentiable = false;   // a step sat on a kink; first-branch subgradient used

  Eigen::VectorXd score_part() const;
  Eigen::VectorXd total() const;
};

/// Ring of lag+1 adjoint vectors holding lambda_i .. lambda_{i-lag} while the
/// reverse pass walks from step n down to 1.
class AdjointWindow {
 public:
  AdjointWindow(int lag, int state_dim);

  Eigen::VectorXd& at(int step) { return slots_[step % slots_.size()]; }
  // Hands back lambda_step and clears its slot for reuse by step-lag-1.
  Eigen::VectorXd take(int step);

 private:
  std::vector<Eigen::VectorXd> slots_;
};

GradEstimate reverse_pass(const StepModel& model, const LossSpec& loss, const Eigen::VectorXd& theta,
                          const Trajectory& trajectory);

struct BatchEstimate {
  Eigen::VectorXd mean_gradient;
  double mean_objective = 0.0;
  std::vector<GradEstimate> samples;
};

// Trajectory k uses seed derive_seed(seed, k); results do not depend on
// `threads`.
BatchEstimate estimate_gradient(const StepModel& model, const LossSpec& loss,
                                const Eigen::VectorXd& theta, const Eigen::VectorXd& x0, int batch,
                                std::uint64_t seed, int threads = 1);

// Adjoint gradient of a model without score steps. Pathwise noise, if any,
// is drawn from `seed`.
Eigen::VectorXd deterministic_adjoint(const StepModel& model, const LossSpec& loss,
                                      const Eigen::VectorXd& theta, const Eigen::VectorXd& x0,
                                      std::uint64_t seed = 0);

// Central differences, 2m evaluations of `objective`.
Eigen::VectorXd finite_difference_gradient(const std::function<double(const Eigen::VectorXd&)>& objective,
                                           const Eigen::VectorXd& theta, double h);

// Runs fn(k) for k in [0, count) over up to `threads` worker threads.
void parallel_for(int count, int threads, const std::function<void(int)>& fn);

}  // namespace stochadj
