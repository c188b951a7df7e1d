#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stochadj/baselines.hpp"
#include "stochadj/estimator.hpp"
#include "stochadj/model.hpp"

namespace stochadj {

struct EnumeratedPath {
  Trajectory trajectory;
  double probability = 0.0;
  GradEstimate estimate;
  Eigen::VectorXd gradient;  // after the report's baseline, if any
};

struct EnumerationReport {
  std::vector<EnumeratedPath> paths;
  double expected_objective = 0.0;
  Eigen::VectorXd expected_gradient;
  double variance = 0.0;
  bool cold_start = false;
};

constexpr std::size_t kMaxEnumeratedPaths = 1000000;

// Every path of a model whose steps all have finite support and no pathwise
// noise, with per-path estimates and no baseline.
EnumerationReport enumerate(const StepModel& model, const LossSpec& loss, const Eigen::VectorXd& theta,
                            const Eigen::VectorXd& x0, std::size_t max_paths = kMaxEnumeratedPaths);

// Recomputes per-path gradients, the mean and the variance under a baseline.
EnumerationReport with_baseline(const EnumerationReport& report, const BaselineState& state,
                                const ConditioningKey& keys);

enum class ExactBaseline { kValue, kOptimal, kOptimalPerParam, kQFunction };

const char* exact_baseline_name(ExactBaseline kind);

/// Exact baseline tables computed from an enumeration. kOptimal and
/// kOptimalPerParam come back as c-optimal states holding exact numerator
/// and denominator moments, so beta is their ratio. kValue and kQFunction
/// come back as fixed value tables. Observations of one key are pooled
/// across steps.
BaselineState exact_baseline(const EnumerationReport& report, const ConditioningKey& keys,
                             ExactBaseline kind);

// Convenience wrapper: enumerate, then build the requested optimal table.
BaselineState exact_optimal_baselines(const StepModel& model, const LossSpec& loss,
                                      const Eigen::VectorXd& theta, const Eigen::VectorXd& x0,
                                      const ConditioningKey& keys, bool per_parameter);

struct CrnReport {
  Eigen::VectorXd mean_gradient;
  Eigen::VectorXd fd_gradient;
  Eigen::VectorXd coordinate_gap;  // |mean - fd| / max(|fd|, tiny)
  double relative_gap = 0.0;       // ||mean - fd|| / ||fd||
};

// Mean adjoint gradient over N seeds against central differences of the
// mean objective with the same N seeds on both sides.
CrnReport crn_fd_check(const StepModel& model, const LossSpec& loss, const Eigen::VectorXd& theta,
                       const Eigen::VectorXd& x0, double h, int samples, std::uint64_t seed,
                       int threads = 1);

using GradientReader = std::function<Eigen::VectorXd(const GradEstimate&)>;

struct UnbiasednessReport {
  Eigen::VectorXd mean_gradient;
  Eigen::VectorXd gradient_se;
  Eigen::VectorXd fd_gradient;
  Eigen::VectorXd fd_se;
  Eigen::VectorXd z;
  bool passed = false;
};

constexpr double kZGate = 4.0;
constexpr int kMinUnbiasednessSamples = 1000;

/// z-test of the mean gradient estimate against central differences of an
/// independently sampled mean objective. The two sides of each difference
/// share seeds; the gradient samples use a separate seed stream. `reader`
/// picks the gradient out of each estimate (defaults to total()).
UnbiasednessReport statistical_unbiasedness_test(const StepModel& model, const LossSpec& loss,
                                                 const Eigen::VectorXd& theta,
                                                 const Eigen::VectorXd& x0, int samples, double h,
                                                 std::uint64_t seed, int threads = 1,
                                                 GradientReader reader = {});

struct PartialsReport {
  int points = 0;
  int checked = 0;       // partials compared
  double max_gap = 0.0;  // |analytic - fd| / max(|analytic|, |fd|, 1)
  std::string worst;     // which partial gave max_gap
};

/// Compares step_vjp and log_density partials at random points against
/// central differences. Each point perturbs theta, simulates a path and
/// picks one step; state partials are checked per distinct past state.
PartialsReport check_step_partials(const StepModel& model, const LossSpec& loss, const Eigen::VectorXd& theta,
                                   const Eigen::VectorXd& x0, int points, std::uint64_t seed,
                                   const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& project = {},
                                   double spread = 0.1, double h = 1e-6);

}  // namespace stochadj
