#include "geoprev/link.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>

#include <Eigen/Eigenvalues>

namespace geoprev {

double logit(double p) {
  if (p <= 0.0) return -kLogitClamp;
  if (p >= 1.0) return kLogitClamp;
  return std::clamp(std::log(p) - std::log1p(-p), -kLogitClamp, kLogitClamp);
}

double inv_logit(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

namespace {

// Golub-Welsch on the Jacobi matrix of the probabilists' Hermite polynomials.
GaussHermite build_rule(std::size_t n) {
  GaussHermite rule;
  if (n == 0) return rule;
  const auto m = static_cast<Eigen::Index>(n);
  Eigen::VectorXd diag = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd sub(std::max<Eigen::Index>(m - 1, 0));
  for (Eigen::Index k = 0; k + 1 < m; ++k) sub[k] = std::sqrt(static_cast<double>(k + 1));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
  es.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
  rule.nodes.resize(n);
  rule.weights.resize(n);
  double total = 0.0;
  for (Eigen::Index k = 0; k < m; ++k) {
    rule.nodes[static_cast<std::size_t>(k)] = es.eigenvalues()[k];
    const double v = es.eigenvectors()(0, k);
    rule.weights[static_cast<std::size_t>(k)] = v * v;
    total += v * v;
  }
  for (auto& w : rule.weights) w /= total;
  return rule;
}

}  // namespace

const GaussHermite& gauss_hermite(std::size_t n) {
  static std::mutex mutex;
  static std::map<std::size_t, std::unique_ptr<GaussHermite>> cache;
  std::lock_guard lock(mutex);
  auto& slot = cache[n];
  if (!slot) slot = std::make_unique<GaussHermite>(build_rule(n));
  return *slot;
}

LogitNormalMoments logit_normal_moments(double mu, double sd) {
  if (!(sd > 0.0)) {
    const double p = inv_logit(mu);
    return {p, 0.0};
  }
  const auto& gh = gauss_hermite(512);
  double m1 = 0.0, m2 = 0.0;
  for (std::size_t k = 0; k < gh.nodes.size(); ++k) {
    const double w = gh.weights[k];
    if (w == 0.0) continue;
    const double p = inv_logit(mu + sd * gh.nodes[k]);
    m1 += w * p;
    m2 += w * p * p;
  }
  return {m1, std::max(0.0, m2 - m1 * m1)};
}

}  // namespace geoprev
