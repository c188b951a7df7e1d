#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stochadj/model.hpp"
#include "stochadj/problems/sde.hpp"
#include "stochadj/tape_model.hpp"

namespace stochadj::testing {

// Tape-recorded copies of the hand-differentiated models. Draws and
// supports are delegated to the original, so only h_i and log p_i come
// from the tape.
std::shared_ptr<TapeStepModel> piecewise_twin(std::shared_ptr<const StepModel> model, std::vector<double> lead);
std::shared_ptr<TapeStepModel> categorical_twin(std::shared_ptr<const StepModel> model);
std::shared_ptr<TapeStepModel> sde_twin(std::shared_ptr<const StepModel> model, const SdeConfig& config);
std::shared_ptr<TapeStepModel> ovm_twin(std::shared_ptr<const StepModel> model, std::vector<double> lead_pos,
                                        int vehicles, double dt, double lead_length);

struct TwinReport {
  int points = 0;
  int compared = 0;
  double max_gap = 0.0;  // |a - b| / max(|a|, |b|, 1)
  std::string worst;
};

using Projection = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

/// At `points` random (theta, path, step) triples, compares h_i, a random
/// vjp of h_i and log p_i with its partials between two models.
TwinReport compare_twins(const StepModel& analytic, const StepModel& tape, const LossSpec& loss,
                         const Eigen::VectorXd& theta, const Eigen::VectorXd& x0, int points,
                         std::uint64_t seed, const Projection& project = {}, double spread = 0.1);

// log N(y; mean, L L^T) through an explicit dense inverse of the covariance.
double dense_mvnormal_logpdf(const Eigen::VectorXd& mean, const Eigen::MatrixXd& factor, const Eigen::VectorXd& y);

}  // namespace stochadj::testing
