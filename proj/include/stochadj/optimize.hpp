#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stochadj/baselines.hpp"
#include "stochadj/problems/problem.hpp"

namespace stochadj {

struct SgdConfig {
  double alpha_theta = 0.01;
  double alpha_phi = 0.01;
  int iterations = 1000;
  int batch = 1;
  BaselineKind baseline = BaselineKind::kNone;
  UpdateRule baseline_rule = UpdateRule::kSgd;
  ReturnSpec returns;
  std::uint64_t seed = 0;
  int replications = 1;
  // Exact estimator variance per iteration via enumeration (enumerable
  // problems only).
  bool track_exact_variance = false;
  // Train only the baseline; theta stays at its start point.
  bool freeze_theta = false;
  // Overrides the problem's conditioning key.
  std::optional<ConditioningKey> keys;
  // Start point; the problem's theta0 when empty.
  Eigen::VectorXd theta0;
};

void validate(const SgdConfig& config);

/// Per-iteration record. Entry k holds the iterate the gradient was taken
/// at, the batch mean objective and baselined gradient there, the baseline
/// parameters after that iteration's update and the exact variance of the
/// single-sample estimator before the update (NaN when not tracked).
struct RunHistory {
  std::vector<Eigen::VectorXd> theta;
  std::vector<double> objective;
  std::vector<Eigen::VectorXd> gradient;
  std::vector<Eigen::VectorXd> baseline_params;
  std::vector<double> exact_variance;
  std::vector<double> metric;
  Eigen::VectorXd final_theta;
  std::optional<BaselineState> final_baseline;
  bool aborted = false;  // a non-finite iterate stopped the run early
  std::string abort_reason;

  int iterations() const { return static_cast<int>(theta.size()); }
};

// theta -/+ alpha * gradient, depending on the sense.
Eigen::VectorXd sgd_step(const Eigen::VectorXd& theta, const Eigen::VectorXd& gradient, double alpha,
                         Sense sense);

// One replication, seeded with config.seed.
RunHistory sgd_run(const Problem& problem, const SgdConfig& config);

// Replication r runs with seed derive_seed(config.seed, r); output order does
// not depend on `threads`.
std::vector<RunHistory> sgd_replications(const Problem& problem, const SgdConfig& config, int threads = 1);

struct GdConfig {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
  int max_iterations = 2000;
  double tolerance = 1e-8;  // on the projected gradient norm, box-scaled coordinates
  double armijo = 1e-4;
  double shrink = 0.5;
  int max_backtracks = 50;
};

struct GdResult {
  Eigen::VectorXd theta;
  double loss = 0.0;
  double projected_gradient_norm = 0.0;
  int iterations = 0;
  bool converged = false;
  bool line_search_failed = false;
  std::vector<double> loss_history;
};

/// Projected gradient descent with Armijo backtracking for problems without
/// score steps. Works in coordinates scaled to the unit box so parameters of
/// very different magnitude share one step length.
GdResult gd_calibrate(const Problem& problem, const Eigen::VectorXd& theta0, const GdConfig& config);

struct CostSample {
  int param_dim = 0;
  double t_objective = 0.0;  // seconds per call
  double t_adjoint = 0.0;
  double t_fd = 0.0;
};

// Median wall time of one forward simulation, one adjoint gradient and one
// central-difference gradient over `repeats` runs.
CostSample measure_gradient_cost(const Problem& problem, const Eigen::VectorXd& theta, int repeats);

}  // namespace stochadj
