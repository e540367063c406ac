#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include "geoprev/geodata.hpp"

namespace geoprev::frk {

/// Multi-resolution Gaussian basis functions phi(x) = exp(-|x - c|^2 / (2 a^2))
/// laid on regular grids, one grid per resolution.
struct BasisSet {
  struct Layer {
    std::size_t nx = 0;
    std::size_t ny = 0;
    std::size_t offset = 0;  // index of the first function of this layer
    double spacing = 0.0;
    double aperture = 0.0;
  };

  std::vector<Location> centres;
  std::vector<double> apertures;
  std::vector<int> resolution;  // 1-based layer id per function
  std::vector<Layer> layers;
  int nres = 2;
  int regular = 1;
  double scale_aperture = 1.25;

  std::size_t size() const { return centres.size(); }
};

/// Resolution k places regular * 3 * 2^(k-1) centres along the shorter side of
/// the box, the longer side scaled to keep the spacing square. The box is first
/// grown by one aperture of the unexpanded layout on every side, and the
/// aperture of a layer is scale_aperture times its centre spacing.
BasisSet place_basis(const BBox& bbox, int nres = 2, int regular = 1,
                     double scale_aperture = 1.25);

/// |pts| x r design matrix of basis values.
Eigen::MatrixXd basis_eval(const BasisSet& basis, std::span<const Location> pts);

/// Basic areal units: cells of the lattice anchored at lon = 0, lat = 0 with
/// side `cell_size`, addressed by integer (column, row) keys.
using BauKey = std::pair<std::int64_t, std::int64_t>;

BauKey bau_key(const Location& loc, double cell_size);
Location bau_centroid(const BauKey& key, double cell_size);

struct BauGrid {
  double cell_size = 0.1;
  std::vector<BauKey> keys;
  std::vector<Location> centroids;

  /// Cells whose centroids are the valid cell centres of `r`.
  static BauGrid from_raster(const Raster& r, double cell_size);
  /// Every cell intersecting `bbox`.
  static BauGrid covering(const BBox& bbox, double cell_size);
  std::size_t size() const { return keys.size(); }
};

/// n x M incidence C_Z mapping each observation to the BAU containing it, with
/// BAUs numbered in order of first appearance. `bau_keys` receives the keys.
Eigen::SparseMatrix<double> incidence_matrix(std::span<const SurveyRecord> records,
                                             double cell_size, std::vector<BauKey>* bau_keys);

enum class Response {
  Binomial,  // H ~ Binomial(N, inv_logit(zeta))
  Gaussian,  // H/N ~ N(zeta, gaussian_noise_var); test hook, Laplace is exact
};

struct FrkSpec {
  int nres = 2;
  int regular = 1;
  double scale_aperture = 1.25;
  double bau_cell_size = 0.1;
  int n_mc = 400;
  bool fine_scale = true;
  Response response = Response::Binomial;
  double gaussian_noise_var = 0.01;
  std::uint64_t seed = 1;
  unsigned threads = 1;

  void validate() const;
};

/// Hyperparameters: intercept, per-resolution CAR precision scale tau_k and
/// propriety rho_k, fine-scale variance. The coefficient prior precision of
/// layer k is tau_k * (rho_k * (D - W) + (1 - rho_k) * I) over the 4-neighbour
/// graph of its centre grid.
struct Hyper {
  double beta0 = 0.0;
  std::vector<double> tau;
  std::vector<double> rho;
  double sigma2_xi = 0.1;
};

/// Prior precision of the basis coefficients.
Eigen::MatrixXd coefficient_precision(const BasisSet& basis, const Hyper& h);

/// Gaussian approximation of (eta, xi) at the joint mode. The negative Hessian
/// is kept in block form: Schur complement S on eta, cross block H_eta_xi and
/// the diagonal xi block.
struct LaplaceState {
  Eigen::VectorXd eta;
  Eigen::VectorXd xi;
  Eigen::MatrixXd schur;
  Eigen::MatrixXd h_eta_xi;
  Eigen::VectorXd h_xi_diag;
  double log_marginal = 0.0;
  int newton_iterations = 0;
};

/// Laplace-approximated log marginal likelihood at `h`. `warm` seeds the inner
/// Newton iteration. Throws FitError if Newton does not converge in 100 steps.
double laplace_log_marginal(std::span<const SurveyRecord> records, const BasisSet& basis,
                            const FrkSpec& spec, const Hyper& h, LaplaceState* state = nullptr,
                            const LaplaceState* warm = nullptr);

struct FrkFit {
  Hyper hyper;
  LaplaceState laplace;
  double bau_cell_size = 0.1;
  std::vector<BauKey> data_baus;
  std::map<BauKey, std::size_t> data_index;
  Response response = Response::Binomial;
  bool fine_scale = true;
  int outer_iterations = 0;
  bool converged = false;

  double beta0() const { return hyper.beta0; }
  double sigma2_xi() const { return fine_scale ? hyper.sigma2_xi : 0.0; }
};

FrkFit fit(std::span<const SurveyRecord> records, const BasisSet& basis, const FrkSpec& spec);

/// Refits the Laplace state at fixed hyperparameters (used when loading a
/// serialized fit).
FrkFit refit_at(std::span<const SurveyRecord> records, const BasisSet& basis,
                const FrkSpec& spec, const Hyper& hyper);

struct PredictOptions {
  int n_mc = 400;
  std::uint64_t seed = 1;
  unsigned threads = 1;
  bool zero_variance = false;  // test hook: collapse the Laplace Gaussian to its mode
};

struct BauPrediction {
  double mean = 0.0;  // Monte Carlo mean of the mean process
  double sd = 0.0;    // Monte Carlo sd of the mean process
};

std::vector<BauPrediction> predict(const FrkFit& fit, const BasisSet& basis, const BauGrid& bau,
                                   const PredictOptions& options = {});

/// Predictions at arbitrary points, each taken from the BAU containing it.
std::vector<BauPrediction> predict_points(const FrkFit& fit, const BasisSet& basis,
                                          std::span<const Location> pts,
                                          const PredictOptions& options = {});

}  // namespace geoprev::frk
