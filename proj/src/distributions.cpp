#include "stochadj/distributions.hpp"

#include <cmath>
#include <string>

#include "stochadj/error.hpp"
#include "stochadj/special.hpp"

namespace stochadj {
namespace {

constexpr double kLogSqrt2Pi = 0.91893853320467274178;

void require_finite(const Eigen::VectorXd& v, const char* what) {
  if (!v.allFinite()) throw NumericalError(std::string(what) + ": non-finite entries");
}

}  // namespace

Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
  require_finite(logits, "softmax");
  if (logits.size() == 0) throw ValidationError("softmax: empty logits");
  Eigen::VectorXd p = (logits.array() - logits.maxCoeff()).exp();
  return p / p.sum();
}

int categorical_sample(const Eigen::VectorXd& logits, double u) {
  if (!(u >= 0.0 && u < 1.0)) throw ValidationError("categorical_sample: u must lie in [0, 1)");
  const Eigen::VectorXd p = softmax(logits);
  double cumulative = 0.0;
  for (int k = 0; k < p.size(); ++k) {
    cumulative += p[k];
    if (u < cumulative) return k;
  }
  return static_cast<int>(p.size()) - 1;
}

CategoricalScore categorical_score(const Eigen::VectorXd& logits, int outcome) {
  if (outcome < 0 || outcome >= logits.size()) {
    throw ValidationError("categorical_score: outcome " + std::to_string(outcome) +
                          " outside 0.." + std::to_string(logits.size() - 1));
  }
  const Eigen::VectorXd p = softmax(logits);
  const double top = logits.maxCoeff();
  const double lse = top + std::log((logits.array() - top).exp().sum());
  CategoricalScore out{logits[outcome] - lse, -p};
  out.d_logits[outcome] += 1.0;
  return out;
}

NormalLogpdf normal_logpdf(const NormalParams& params, double y) {
  if (!(params.stddev > 0.0)) throw ValidationError("normal_logpdf: stddev must be positive");
  const double s = params.stddev;
  const double r = (y - params.mean) / s;
  return {-0.5 * r * r - std::log(s) - kLogSqrt2Pi, r / s, (r * r - 1.0) / s, -r / s};
}

double normal_sample(const NormalParams& params, double u) {
  if (!(params.stddev > 0.0)) throw ValidationError("normal_sample: stddev must be positive");
  return params.mean + params.stddev * normal_quantile(u);
}

Eigen::MatrixXd MvNormalCholesky::factor() const {
  Eigen::MatrixXd a = factor_params.triangularView<Eigen::StrictlyLower>();
  a.diagonal() = factor_params.diagonal().array().exp();
  return a;
}

MvNormalLogpdf mvnormal_logpdf(const MvNormalCholesky& dist, const Eigen::VectorXd& y) {
  const Eigen::Index k = dist.mean.size();
  if (y.size() != k || dist.factor_params.rows() != k || dist.factor_params.cols() != k) {
    throw ValidationError("mvnormal_logpdf: dimension mismatch");
  }
  require_finite(dist.mean, "mvnormal_logpdf mean");
  require_finite(y, "mvnormal_logpdf y");
  if (!dist.factor_params.triangularView<Eigen::Lower>().toDenseMatrix().allFinite()) {
    throw NumericalError("mvnormal_logpdf: non-finite factor");
  }
  const Eigen::MatrixXd a = dist.factor();
  const Eigen::VectorXd w = a.triangularView<Eigen::Lower>().solve(y - dist.mean);
  const Eigen::VectorXd v = a.transpose().triangularView<Eigen::Upper>().solve(w);

  MvNormalLogpdf out;
  out.value = -0.5 * w.squaredNorm() - dist.factor_params.diagonal().sum() -
              static_cast<double>(k) * kLogSqrt2Pi;
  out.d_mean = v;
  out.d_y = -v;
  out.d_factor_params = (v * w.transpose()).triangularView<Eigen::Lower>();
  for (Eigen::Index j = 0; j < k; ++j) {
    out.d_factor_params(j, j) = out.d_factor_params(j, j) * a(j, j) - 1.0;
  }
  return out;
}

Eigen::VectorXd mvnormal_sample(const MvNormalCholesky& dist,
                                const Eigen::VectorXd& standard_normals) {
  if (standard_normals.size() != dist.mean.size()) {
    throw ValidationError("mvnormal_sample: dimension mismatch");
  }
  return dist.mean + dist.factor().triangularView<Eigen::Lower>() * standard_normals;
}

ProbitResult probit_switch(const ProbitSwitch& sw, int outcome) {
  if (!(sw.scale > 0.0)) throw ValidationError("probit_switch: scale must be positive");
  if (outcome != 0 && outcome != 1) throw ValidationError("probit_switch: outcome must be 0 or 1");
  if (!std::isfinite(sw.threshold) || !std::isfinite(sw.signal) || !std::isfinite(sw.scale)) {
    throw NumericalError("probit_switch: non-finite input");
  }
  const double u = (sw.threshold - sw.signal) / sw.scale;
  const double sign = outcome == 0 ? 1.0 : -1.0;
  const double d_u = sign * normal_hazard(sign * u);
  return {normal_cdf(u), log_normal_cdf(sign * u), d_u / sw.scale, -d_u * u / sw.scale,
          -d_u / sw.scale};
}

}  // namespace stochadj
