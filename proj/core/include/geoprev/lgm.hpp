#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include "geoprev/geodata.hpp"

namespace geoprev::lgm {

/// Regular grid of GMRF nodes. Node (i, j) sits at origin + (i, j) * cell and
/// has linear index j * nx + i.
struct Lattice {
  Location origin;
  double cell = 0.5;
  std::size_t nx = 0;
  std::size_t ny = 0;

  std::size_t size() const { return nx * ny; }
  Location node(std::size_t idx) const;
  BBox hull() const;
  bool contains(const Location& p) const;

  /// Lattice over `bbox` grown by `margin` on each side.
  static Lattice covering(const BBox& bbox, double cell, double margin);
};

/// SPDE precision for smoothness order 2:
/// tau * (kappa^2 C + G) C^{-1} (kappa^2 C + G), C the lumped cell areas and G
/// the 5-point stiffness matrix.
Eigen::SparseMatrix<double> build_precision(const Lattice& lattice, double kappa, double tau);

/// Bilinear interpolation weights; throws BoundsError for points off the lattice.
Eigen::SparseMatrix<double> interp_matrix(const Lattice& lattice, std::span<const Location> pts);

enum class Response {
  Binomial,      // H ~ Binomial(N, p)
  BetaBinomial,  // Var H = N p (1 - p) (1 + (N - 1) / (1 + phi))
  Gaussian,      // H/N ~ N(eta, noise_var), identity link
};

std::string to_string(Response r);
Response response_from_string(const std::string& s);

struct LgmSpec {
  double lattice_cell = 0.5;
  double margin = 2.0;
  int alpha = 2;
  Response response = Response::Binomial;
  double kappa_min = 1e-3, kappa_max = 1e3;
  // Practical ranges shorter than this many lattice cells cannot be
  // represented; kappa is capped at sqrt(8) / (min_range_cells * lattice_cell).
  double min_range_cells = 2.0;
  double tau_min = 1e-9, tau_max = 1e9;
  double phi_min = 1e-2, phi_max = 1e4;
  double noise_var_min = 1e-8, noise_var_max = 1e2;
  std::optional<double> fixed_noise_var;  // Gaussian response: hold the noise variance fixed
  double intercept_precision = 1e-6;
  bool strict_bounds = false;  // throw FitError when the optimum sits on a box edge
  unsigned threads = 1;

  void validate() const;
  double effective_kappa_max() const;
};

/// Hyperparameters. `extra` is phi (BetaBinomial), the noise variance
/// (Gaussian) and unused for Binomial.
struct Theta {
  double kappa = 1.0;
  double tau = 1.0;
  double extra = 0.0;
};

/// Laplace approximation at fixed hyperparameters. The latent vector is the
/// lattice field followed by the intercept.
struct LatentMode {
  Eigen::VectorXd x;
  double log_marginal = 0.0;
  int newton_iterations = 0;
};

double laplace_log_marginal(std::span<const SurveyRecord> records, const Lattice& lattice,
                            const LgmSpec& spec, const Theta& theta, LatentMode* mode = nullptr);

using Cholesky = Eigen::SimplicialLLT<Eigen::SparseMatrix<double>, Eigen::Lower,
                                      Eigen::AMDOrdering<int>>;

struct LgmFit {
  Lattice lattice;
  LgmSpec spec;
  Theta theta;
  Eigen::VectorXd mode;                  // field nodes then intercept
  std::shared_ptr<const Cholesky> chol;  // precision of the Gaussian approximation
  double log_marginal = 0.0;
  std::vector<std::string> bound_hits;   // hyperparameters that ended on a box edge
  int outer_iterations = 0;
  bool converged = false;

  double beta0() const { return mode[mode.size() - 1]; }
  /// (log kappa, log tau[, log extra]).
  Eigen::VectorXd theta_hat() const;
};

LgmFit fit(std::span<const SurveyRecord> records, const LgmSpec& spec);

/// Gaussian approximation at fixed hyperparameters, used to restore a fit.
LgmFit refit_at(std::span<const SurveyRecord> records, const LgmSpec& spec, const Theta& theta);

struct LgmPrediction {
  double median = 0.0;
  double mean = 0.0;
  double sd = 0.0;
  double latent_mean = 0.0;
  double latent_sd = 0.0;
};

std::vector<LgmPrediction> predict(const LgmFit& fit, std::span<const Location> pts);

struct RangeDiagnostic {
  double practical_range = 0.0;  // sqrt(8) / kappa
  double field_variance = 0.0;   // 1 / (4 pi kappa^2 tau)
};

RangeDiagnostic range_diagnostic(const LgmFit& fit);
RangeDiagnostic range_diagnostic(const Theta& theta);

}  // namespace geoprev::lgm
