#pragma once

namespace stochadj {

// Standard normal density, CDF and helpers that stay accurate in the far
// left tail (needed when a probit scale shrinks toward zero).
double normal_pdf(double u);
double normal_cdf(double u);
double log_normal_cdf(double u);
// phi(u) / Phi(u), the derivative of log Phi.
double normal_hazard(double u);
// Inverse of normal_cdf on (0, 1).
double normal_quantile(double p);

}  // namespace stochadj
