#pragma once

#include <Eigen/Dense>

namespace stochadj {

// Outcome indices are zero-based throughout: outcome 0 is the first category.

Eigen::VectorXd softmax(const Eigen::VectorXd& logits);

// Inverse-CDF draw: the smallest k with u < p_0 + ... + p_k.
int categorical_sample(const Eigen::VectorXd& logits, double u);

struct CategoricalScore {
  double logpmf;
  Eigen::VectorXd d_logits;  // e_k - softmax(logits)
};

CategoricalScore categorical_score(const Eigen::VectorXd& logits, int outcome);

struct NormalParams {
  double mean;
  double stddev;
};

struct NormalLogpdf {
  double value;
  double d_mean;
  double d_stddev;
  double d_y;
};

NormalLogpdf normal_logpdf(const NormalParams& params, double y);
// mean + stddev * Phi^{-1}(u)
double normal_sample(const NormalParams& params, double u);

/// Multivariate normal with covariance A A^T, A lower triangular. The
/// stored matrix keeps log(A_jj) on its diagonal; entries above the
/// diagonal are ignored.
struct MvNormalCholesky {
  Eigen::VectorXd mean;
  Eigen::MatrixXd factor_params;

  Eigen::MatrixXd factor() const;
};

struct MvNormalLogpdf {
  double value;
  Eigen::VectorXd d_mean;
  // Partials with respect to the stored parameters (lower triangle only).
  Eigen::MatrixXd d_factor_params;
  Eigen::VectorXd d_y;
};

MvNormalLogpdf mvnormal_logpdf(const MvNormalCholesky& dist, const Eigen::VectorXd& y);
// mean + A * standard_normals
Eigen::VectorXd mvnormal_sample(const MvNormalCholesky& dist,
                                const Eigen::VectorXd& standard_normals);

/// Two-way switch with P(outcome 0) = Phi((threshold - signal) / scale).
struct ProbitSwitch {
  double threshold;
  double scale;
  double signal;
};

struct ProbitResult {
  double p_first;
  double logpmf;  // of the requested outcome
  double d_threshold;
  double d_scale;
  double d_signal;
};

ProbitResult probit_switch(const ProbitSwitch& sw, int outcome);

}  // namespace stochadj
