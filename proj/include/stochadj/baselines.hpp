#pragma once

#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stochadj/estimator.hpp"
#include "stochadj/model.hpp"

namespace stochadj {

/// What a baseline for step i may see: x_0..x_{i-1}, y_1..y_{i-1} and every
/// z. Reading anything later throws, which keeps baselines unbiased.
class PathPrefix {
 public:
  PathPrefix(const Trajectory& trajectory, int step);

  int step() const { return step_; }
  int steps() const { return trajectory_.steps(); }
  const Eigen::VectorXd& x(int j) const;
  const Eigen::VectorXd& y(int j) const;
  const Eigen::VectorXd& z(int j) const;

 private:
  const Trajectory& trajectory_;
  int step_;
};

/// Maps a path prefix to a discrete key in [0, key_count) or to a feature
/// vector for a linear baseline.
class ConditioningKey {
 public:
  using TableFn = std::function<int(const PathPrefix&)>;
  using FeatureFn = std::function<Eigen::VectorXd(const PathPrefix&)>;

  static ConditioningKey table(int key_count, TableFn fn);
  static ConditioningKey linear(int feature_dim, FeatureFn fn);

  bool is_tabular() const { return static_cast<bool>(table_fn_); }
  int key_count() const { return key_count_; }
  int feature_dim() const { return feature_dim_; }

  int key(const Trajectory& trajectory, int step) const;
  Eigen::VectorXd features(const Trajectory& trajectory, int step) const;

 private:
  TableFn table_fn_;
  FeatureFn feature_fn_;
  int key_count_ = 0;
  int feature_dim_ = 0;
};

enum class BaselineKind { kNone, kValue, kCOptimal, kCOptimalPerParam, kFnApprox, kDirect };
enum class UpdateRule { kSgd, kRunningMean };

const char* baseline_kind_name(BaselineKind kind);
BaselineKind parse_baseline_kind(const std::string& name);

struct BetaEval {
  Eigen::VectorXd beta;  // length m; scalar baselines are replicated
  bool cold_start = false;  // key outside the table
  bool floored = false;     // a denominator fell below the floor, beta set to 0
};

/// Parameters of one baseline family. Tabular kinds keep one row per key;
/// linear kinds keep weight vectors over the key features.
class BaselineState {
 public:
  static BaselineState none(int param_dim);
  static BaselineState value(const ConditioningKey& keys, int param_dim, double alpha,
                             UpdateRule rule = UpdateRule::kSgd);
  static BaselineState c_optimal(const ConditioningKey& keys, int param_dim, double alpha,
                                 bool per_parameter, UpdateRule rule = UpdateRule::kSgd);
  static BaselineState fn_approx(const ConditioningKey& keys, int param_dim, double alpha);
  static BaselineState direct(const ConditioningKey& keys, int param_dim, double alpha);
  static BaselineState make(BaselineKind kind, const ConditioningKey& keys, int param_dim,
                            double alpha, UpdateRule rule = UpdateRule::kSgd);

  BaselineKind kind() const { return kind_; }
  int param_dim() const { return param_dim_; }
  double alpha() const { return alpha_; }
  double floor() const { return floor_; }
  UpdateRule rule() const { return rule_; }
  bool tabular() const { return tabular_; }

  BetaEval beta(const ConditioningKey& keys, const Trajectory& trajectory, int step) const;
  // Tabular states only: beta for a key without a trajectory.
  BetaEval beta_at_key(int key) const;
  int key_count() const { return tabular_ ? static_cast<int>(numer_.rows()) : 0; }

  // Flattened parameters. Layouts: value/direct -> table or weights;
  // c_optimal -> numerators then denominators (key-major); fn_approx ->
  // top weights then bottom weights.
  Eigen::VectorXd parameters() const;
  void set_parameters(const Eigen::VectorXd& phi);

  // Tables for tabular kinds. For value/direct `numer` holds beta and
  // `denom` is unused.
  const Eigen::MatrixXd& numer() const { return numer_; }
  const Eigen::MatrixXd& denom() const { return denom_; }
  Eigen::MatrixXd& numer() { return numer_; }
  Eigen::MatrixXd& denom() { return denom_; }
  Eigen::VectorXd& counts() { return counts_; }

 private:
  BaselineState() = default;
  BetaEval beta_from_key(int key, const Eigen::VectorXd& features) const;

  BaselineKind kind_ = BaselineKind::kNone;
  int param_dim_ = 0;
  double alpha_ = 0.0;
  double floor_ = 1e-12;
  UpdateRule rule_ = UpdateRule::kSgd;
  bool tabular_ = true;
  // Tabular: rows are keys, columns are 1 or m. Linear: a single column of
  // weights over features.
  Eigen::MatrixXd numer_;
  Eigen::MatrixXd denom_;
  Eigen::VectorXd counts_;

};

struct BaselinedGradient {
  Eigen::VectorXd gradient;
  bool cold_start = false;
  bool floored = false;
  bool experimental = false;  // estimate also carries a pathwise part
};

// Weights paired with estimate.score_components; empty means use the
// weights recorded in the estimate.
using ComponentWeights = std::vector<double>;

BaselinedGradient apply_baseline(const GradEstimate& estimate, const BaselineState& state,
                                 const ConditioningKey& keys, const Trajectory& trajectory,
                                 const ComponentWeights& weights = {});

// Each update returns the flattened gradient of the baseline parameters
// (same layout as parameters()) and then steps the state.
Eigen::VectorXd update_value_baseline(BaselineState& state, const GradEstimate& estimate,
                                      const ConditioningKey& keys, const Trajectory& trajectory,
                                      const ComponentWeights& weights = {});
Eigen::VectorXd update_c_optimal(BaselineState& state, const GradEstimate& estimate,
                                 const ConditioningKey& keys, const Trajectory& trajectory,
                                 const ComponentWeights& weights = {});
Eigen::VectorXd update_per_parameter(BaselineState& state, const GradEstimate& estimate,
                                     const ConditioningKey& keys, const Trajectory& trajectory,
                                     const ComponentWeights& weights = {});
Eigen::VectorXd update_fn_approx(BaselineState& state, const GradEstimate& estimate,
                                 const ConditioningKey& keys, const Trajectory& trajectory,
                                 const ComponentWeights& weights = {});
Eigen::VectorXd update_direct(BaselineState& state, const GradEstimate& estimate,
                              const ConditioningKey& keys, const Trajectory& trajectory,
                              const ComponentWeights& weights = {});

// Gradient of the baseline parameters summed over several trajectories,
// then a single step. Dispatches on the state's kind.
struct BaselineObservation {
  const GradEstimate* estimate;
  const Trajectory* trajectory;
  ComponentWeights weights;
};
Eigen::VectorXd update_baseline(BaselineState& state, const ConditioningKey& keys,
                                const std::vector<BaselineObservation>& batch);

enum class ReturnMode { kRaw, kDiscounted, kBootstrap, kGae };

struct ReturnSpec {
  double gamma = 1.0;
  double kappa = 1.0;
  ReturnMode mode = ReturnMode::kRaw;
};

ReturnMode parse_return_mode(const std::string& name);

// step_losses and next_values use 1-based slots; next_values[i] is
// V(xi_{i+1}) and V(xi_{n+1}) is taken as 0 whatever slot n holds. Raw mode
// ignores gamma.
std::vector<double> compute_returns(const std::vector<double>& step_losses,
                                    const std::vector<double>& next_values, const ReturnSpec& spec);

// V(xi_{i+1}) for i = 1..n from a value-kind state; slot n is 0.
std::vector<double> next_state_values(const BaselineState& value_state, const ConditioningKey& keys,
                                      const Trajectory& trajectory);

// Weights for each score component of `estimate` under `spec`.
ComponentWeights component_weights(const GradEstimate& estimate, const std::vector<double>& returns);

struct VarianceEstimate {
  double variance = 0.0;
  double standard_error = 0.0;
  Eigen::VectorXd mean;
};

// E||g||^2 - ||E g||^2 with the plug-in mean, and a standard error for it.
VarianceEstimate estimator_variance(const std::vector<Eigen::VectorXd>& samples);
// Same quantity for an exact finite distribution.
double exact_variance(const std::vector<Eigen::VectorXd>& values, const std::vector<double>& probs);

}  // namespace stochadj
