#pragma once

#include <optional>
#include <span>
#include <string>

#include <Eigen/Dense>

#include "geoprev/geodata.hpp"

namespace geoprev {

enum class CovFamily { Matern, Exponential, SquaredExponential };

/// Stationary isotropic covariance.
///
/// `range` is in the units of `metric`. Families read it as:
///   Exponential         c(u) = variance * exp(-u / range)
///   SquaredExponential  c(u) = variance * exp(-(u / range)^2)
///   Matern              decay kappa = 1 / range, smoothness lambda,
///                       c(u) = variance / (2^(lambda-1) Gamma(lambda)) (kappa u)^lambda K_lambda(kappa u)
/// so Matern with lambda = 1/2 and Exponential with the same range coincide.
struct CovarianceSpec {
  CovFamily family = CovFamily::Exponential;
  double variance = 1.0;
  double range = 1.0;
  std::optional<double> smoothness;  // Matern only
  DistanceMetric metric = DistanceMetric::Euclidean;

  double kappa() const { return 1.0 / range; }
  static CovarianceSpec matern(double variance, double kappa, double smoothness,
                               DistanceMetric metric = DistanceMetric::Euclidean);
  static CovarianceSpec exponential(double variance, double range,
                                    DistanceMetric metric = DistanceMetric::Euclidean);

  /// Throws ValidationError unless every scalar is strictly positive and the
  /// smoothness is present exactly for the Matern family.
  void validate() const;
};

std::string to_string(CovFamily f);
CovFamily cov_family_from_string(const std::string& s);

/// Diagonal jitter used when none is given: 1e-8 * variance.
inline double default_jitter(const CovarianceSpec& spec) { return 1e-8 * spec.variance; }

double cov_value(const CovarianceSpec& spec, double u);

/// d c(u) / d log(range), used by likelihood gradients.
double cov_dlog_range(const CovarianceSpec& spec, double u);

/// Covariance matrix over `pts` with `jitter` added on the diagonal. The
/// result is verified to be Cholesky-factorizable; failure throws
/// NumericalError naming the smallest pivot.
Eigen::MatrixXd cov_matrix(std::span<const Location> pts, const CovarianceSpec& spec,
                           double jitter);

/// Cross covariance, rows = `a`, cols = `b`.
Eigen::MatrixXd cov_cross(std::span<const Location> a, std::span<const Location> b,
                          const CovarianceSpec& spec);

/// Cholesky factor of a symmetric matrix or NumericalError with the smallest
/// LDL^T pivot in the message.
Eigen::LLT<Eigen::MatrixXd> checked_cholesky(const Eigen::MatrixXd& m, const char* what);

}  // namespace geoprev
