#include "geoprev/covfn.hpp"

#include <cmath>
#include <sstream>

#include "geoprev/errors.hpp"

namespace geoprev {

namespace {

// Matern correlation at scaled lag t = kappa * u.
double matern_corr(double lambda, double t) {
  if (t == 0.0) return 1.0;
  // Half-integer closed forms.
  if (lambda == 0.5) return std::exp(-t);
  if (lambda == 1.5) return (1.0 + t) * std::exp(-t);
  if (lambda == 2.5) return (1.0 + t + t * t / 3.0) * std::exp(-t);
  if (t > 700.0) return 0.0;
  const double k = std::cyl_bessel_k(lambda, t);
  const double log_c = (lambda - 1.0) * std::log(2.0) + std::lgamma(lambda);
  const double r = std::exp(lambda * std::log(t) - log_c) * k;
  // Series round-off can push values a hair above 1 very close to the origin.
  return std::min(1.0, r);
}

}  // namespace

CovarianceSpec CovarianceSpec::matern(double variance, double kappa, double smoothness,
                                      DistanceMetric metric) {
  return {CovFamily::Matern, variance, 1.0 / kappa, smoothness, metric};
}

CovarianceSpec CovarianceSpec::exponential(double variance, double range, DistanceMetric metric) {
  return {CovFamily::Exponential, variance, range, std::nullopt, metric};
}

void CovarianceSpec::validate() const {
  if (!(variance > 0.0) || !std::isfinite(variance))
    throw ValidationError("covariance variance must be > 0");
  if (!(range > 0.0) || !std::isfinite(range)) throw ValidationError("covariance range must be > 0");
  if (family == CovFamily::Matern) {
    if (!smoothness || !(*smoothness > 0.0))
      throw ValidationError("Matern covariance requires smoothness > 0");
  } else if (smoothness) {
    throw ValidationError("smoothness is only valid for the Matern family");
  }
}

std::string to_string(CovFamily f) {
  switch (f) {
    case CovFamily::Matern: return "matern";
    case CovFamily::Exponential: return "exponential";
    case CovFamily::SquaredExponential: return "squared_exponential";
  }
  return "unknown";
}

CovFamily cov_family_from_string(const std::string& s) {
  if (s == "matern") return CovFamily::Matern;
  if (s == "exponential") return CovFamily::Exponential;
  if (s == "squared_exponential" || s == "gaussian") return CovFamily::SquaredExponential;
  throw ValidationError("unknown covariance family `" + s + "`");
}

double cov_value(const CovarianceSpec& spec, double u) {
  if (!std::isfinite(u)) throw ValidationError("covariance lag must be finite");
  if (u < 0.0) throw ValidationError("covariance lag must be non-negative");
  const double s = u / spec.range;
  switch (spec.family) {
    case CovFamily::Exponential: return spec.variance * std::exp(-s);
    case CovFamily::SquaredExponential: return spec.variance * std::exp(-s * s);
    case CovFamily::Matern: return spec.variance * matern_corr(spec.smoothness.value_or(0.5), s);
  }
  return 0.0;
}

double cov_dlog_range(const CovarianceSpec& spec, double u) {
  const double s = u / spec.range;
  switch (spec.family) {
    case CovFamily::Exponential: return spec.variance * std::exp(-s) * s;
    case CovFamily::SquaredExponential: return spec.variance * std::exp(-s * s) * 2.0 * s * s;
    case CovFamily::Matern: {
      if (u == 0.0) return 0.0;
      const double h = 1e-6;
      CovarianceSpec up = spec, dn = spec;
      up.range = spec.range * std::exp(h);
      dn.range = spec.range * std::exp(-h);
      return (cov_value(up, u) - cov_value(dn, u)) / (2.0 * h);
    }
  }
  return 0.0;
}

Eigen::LLT<Eigen::MatrixXd> checked_cholesky(const Eigen::MatrixXd& m, const char* what) {
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() != Eigen::Success) {
    Eigen::LDLT<Eigen::MatrixXd> ldlt(m);
    std::ostringstream msg;
    msg << what << ": Cholesky factorization failed, smallest pivot "
        << ldlt.vectorD().minCoeff();
    throw NumericalError(msg.str());
  }
  return llt;
}

Eigen::MatrixXd cov_matrix(std::span<const Location> pts, const CovarianceSpec& spec,
                           double jitter) {
  const auto n = static_cast<Eigen::Index>(pts.size());
  Eigen::MatrixXd k(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    k(j, j) = spec.variance + jitter;
    for (Eigen::Index i = j + 1; i < n; ++i) {
      const double v = cov_value(spec, distance(pts[i], pts[j], spec.metric));
      k(i, j) = v;
      k(j, i) = v;
    }
  }
  checked_cholesky(k, "cov_matrix");
  return k;
}

Eigen::MatrixXd cov_cross(std::span<const Location> a, std::span<const Location> b,
                          const CovarianceSpec& spec) {
  Eigen::MatrixXd k(static_cast<Eigen::Index>(a.size()), static_cast<Eigen::Index>(b.size()));
  for (std::size_t j = 0; j < b.size(); ++j)
    for (std::size_t i = 0; i < a.size(); ++i)
      k(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          cov_value(spec, distance(a[i], b[j], spec.metric));
  return k;
}

}  // namespace geoprev
