#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stochadj/problems/problem.hpp"

namespace stochadj {

enum class SdeVariant { kPathwise, kScore, kJump };

const char* sde_variant_name(SdeVariant v);
SdeVariant parse_sde_variant(const std::string& name);

/// Discretized SDE with linear drift over a window of past states,
///   b = sum_l drift[l-1] * x_{i-l} + offset.
/// pathwise: x_i = x_{i-1} + b dt + A z_i with z_i ~ N(0, dt I).
/// score:    x_i ~ N(x_{i-1} + b dt, dt A A^T).
/// jump:     x_i = x_{i-1} + b dt + jump_size(j, y_ij) per coordinate j,
///           y_ij ~ softmax(jump_bias(j, .) + jump_slope(j, .) * x_{i-1,j}).
/// The loss is sum_i ||x_i - target||^2.
///
/// Parameter layout: drift matrices (row-major, lag 1 first), offset, then
/// either the diffusion factor (lower triangle row by row, diagonal as its
/// log) or jump_size, jump_bias, jump_slope (row-major, dim x levels).
struct SdeConfig {
  SdeVariant variant = SdeVariant::kPathwise;
  int dim = 2;
  int lag = 1;
  int steps = 50;
  double dt = 0.1;
  int jump_levels = 2;
  Eigen::VectorXd x0;
  Eigen::VectorXd target;
  std::vector<Eigen::MatrixXd> drift;
  Eigen::VectorXd offset;
  Eigen::MatrixXd diffusion;  // stored Cholesky parameters, lower triangle
  Eigen::MatrixXd jump_size;
  Eigen::MatrixXd jump_bias;
  Eigen::MatrixXd jump_slope;
};

SdeConfig default_sde_config(SdeVariant variant);

class SdeModel : public StepModel {
 public:
  explicit SdeModel(const SdeConfig& config);

  ModelShape shape() const override;
  StepDraw draw(const StepInput& in, Rng& rng) const override;
  Eigen::VectorXd step(const StepInput& in) const override;
  std::optional<LogDensity> log_density(const StepInput& in) const override;
  void step_vjp(const StepInput& in, const Eigen::VectorXd& lambda, Eigen::VectorXd& d_theta,
                std::vector<Eigen::VectorXd>& d_lags) const override;
  std::vector<Outcome> support(const StepInput& in) const override;

  int param_dim() const { return param_dim_; }
  int drift_offset(int lag) const { return (lag - 1) * dim_ * dim_; }
  int offset_offset() const { return lag_ * dim_ * dim_; }
  int extra_offset() const { return offset_offset() + dim_; }

  Eigen::MatrixXd drift(const Eigen::VectorXd& theta, int lag) const;
  Eigen::MatrixXd diffusion_params(const Eigen::VectorXd& theta) const;
  Eigen::MatrixXd jump_block(const Eigen::VectorXd& theta, int which) const;
  // x_{i-1} + dt * b
  Eigen::VectorXd drift_step(const StepInput& in) const;

 private:
  void drift_vjp(const StepInput& in, const Eigen::VectorXd& lambda, Eigen::VectorXd& d_theta,
                 std::vector<Eigen::VectorXd>& d_lags) const;
  Eigen::VectorXd jump_logits(const Eigen::VectorXd& theta, const Eigen::VectorXd& prev, int j) const;

  SdeVariant variant_;
  int dim_;
  int lag_;
  int steps_;
  double dt_;
  int levels_;
  int param_dim_;
};

Eigen::VectorXd pack_sde_theta(const SdeConfig& config);
std::vector<ParamSlice> sde_param_slices(const SdeConfig& config);

Problem build_sde(const SdeConfig& config);

}  // namespace stochadj
