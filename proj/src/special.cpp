#include "stochadj/special.hpp"

#include <cmath>
#include <numbers>

#include <boost/math/special_functions/erf.hpp>

#include "stochadj/error.hpp"

namespace stochadj {
namespace {

constexpr double kLogSqrt2Pi = 0.91893853320467274178;
// Below this point erfc underflows; switch to the asymptotic series.
constexpr double kTailCut = -35.0;

// log Phi(u) for u << 0 from the Mills-ratio expansion.
double log_cdf_tail(double u) {
  const double r = 1.0 / (u * u);
  const double series = 1.0 - r * (1.0 - 3.0 * r * (1.0 - 5.0 * r * (1.0 - 7.0 * r)));
  return -0.5 * u * u - kLogSqrt2Pi - std::log(-u) + std::log(series);
}

}  // namespace

double normal_pdf(double u) { return std::exp(-0.5 * u * u - kLogSqrt2Pi); }

double normal_cdf(double u) { return 0.5 * std::erfc(-u / std::numbers::sqrt2); }

double log_normal_cdf(double u) {
  if (u < kTailCut) return log_cdf_tail(u);
  if (u > 5.0) return std::log1p(-0.5 * std::erfc(u / std::numbers::sqrt2));
  return std::log(normal_cdf(u));
}

double normal_hazard(double u) {
  return std::exp(-0.5 * u * u - kLogSqrt2Pi - log_normal_cdf(u));
}

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw ValidationError("normal_quantile: probability must lie in (0, 1)");
  }
  return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p);
}

}  // namespace stochadj
