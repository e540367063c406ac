#pragma once

#include <span>
#include <vector>

namespace geoprev {

/// logit/inverse-logit pair. Probabilities of exactly 0 or 1 map to
/// -/+ kLogitClamp, the point where inv_logit saturates in double precision.
inline constexpr double kLogitClamp = 36.7;

double logit(double p);
double inv_logit(double x);

/// Probabilists' Gauss-Hermite rule: sum_k w_k g(x_k) ~ E[g(Z)], Z ~ N(0, 1).
struct GaussHermite {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// Rule with `n` points, computed once per size and cached.
const GaussHermite& gauss_hermite(std::size_t n);

/// Mean and variance of inv_logit(X) for X ~ N(mu, sd^2) by 512-point
/// Gauss-Hermite quadrature.
struct LogitNormalMoments {
  double mean = 0.0;
  double variance = 0.0;
};
LogitNormalMoments logit_normal_moments(double mu, double sd);

}  // namespace geoprev
