#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "geoprev/cart.hpp"
#include "geoprev/covfn.hpp"
#include "geoprev/geodata.hpp"

namespace geoprev::gp {

/// Covariance parameters optimized by the GP fit: spatial variance sigma1^2,
/// range rho and nugget variance tau^2.
struct Theta {
  double sigma2 = 1.0;
  double range = 1.0;
  double tau2 = 1.0;
};

struct VecchiaSpec {
  int m_fit = 30;
  int m_predict = 150;
};

/// Boosting settings for the fixed-effect function F. Without covariates F is a
/// constant and only `rounds` and `learning_rate` matter; the tree limits apply
/// when a covariate matrix is supplied.
struct BoostingSpec {
  int rounds = 247;
  double learning_rate = 0.01;
  int num_leaves = 1024;
  int max_depth = 6;
  int min_data_in_leaf = 5;
};

struct GpModelSpec {
  CovarianceSpec cov;  // family and metric; variance/range seed theta when !data_init
  double noise_variance = 1.0;
  std::optional<VecchiaSpec> vecchia;
  BoostingSpec boosting;
  bool early_stop = false;  // stop once a round improves the NLL by < 1e-8
  bool data_init = true;    // initialise theta from the data instead of `cov`

  void validate() const;
};

/// Negative log marginal likelihood of y given the fixed effect F, by dense
/// Cholesky of Psi = Sigma(theta) + tau^2 I. `spec` supplies the family and the
/// metric; its variance and range are overridden by `theta`. When `grad` is
/// given it receives the gradient with respect to (log sigma2, log range,
/// log tau2).
double gp_nll(const Eigen::VectorXd& y, const Eigen::VectorXd& f, const Theta& theta,
              std::span<const Location> pts, const CovarianceSpec& spec,
              Eigen::Vector3d* grad = nullptr);

/// For each i, the indices of the <= m nearest points among 0..i-1 (ties to
/// the lower index), sorted by index.
std::vector<std::vector<std::int32_t>> vecchia_neighbours(std::span<const Location> pts, int m,
                                                          DistanceMetric metric);

/// Vecchia approximation: sum of exact Gaussian conditional negative
/// log-densities of y_i given its previously-ordered nearest neighbours.
double gp_nll_vecchia(const Eigen::VectorXd& y, const Eigen::VectorXd& f, const Theta& theta,
                      std::span<const Location> pts, const CovarianceSpec& spec, int m_fit);
double gp_nll_vecchia(const Eigen::VectorXd& y, const Eigen::VectorXd& f, const Theta& theta,
                      std::span<const Location> pts, const CovarianceSpec& spec,
                      const std::vector<std::vector<std::int32_t>>& neighbours);

/// Boosted fixed-effect function: base + sum of learning-rate scaled trees.
/// With no covariates each tree is a single leaf (a constant shift).
struct Booster {
  struct Stage {
    cart::Tree tree;
    std::vector<double> leaf_value;
  };
  double base = 0.0;
  std::vector<Stage> stages;

  double eval(const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
  Eigen::VectorXd eval(const Eigen::MatrixXd& x, Eigen::Index n) const;
};

struct GpFit {
  Theta theta;
  double intercept = 0.0;  // F with no covariates (base plus constant steps)
  CovarianceSpec cov;      // spec.cov with fitted variance and range
  std::optional<VecchiaSpec> vecchia;
  Booster booster;
  std::vector<Location> train_pts;
  Eigen::VectorXd y;
  Eigen::MatrixXd covariates;  // n x p, p = 0 without covariates
  std::vector<double> nll_trace;  // NLL after each round, non-increasing
  double nll_init = 0.0;          // NLL at the initial theta and F
  int rounds_run = 0;

  // Prediction cache for the exact GP: Psi^{-1}(y - F) and the factor of Psi.
  Eigen::VectorXd alpha;
  std::shared_ptr<const Eigen::LLT<Eigen::MatrixXd>> chol;

  /// Recomputes the prediction cache from the stored data and parameters.
  void refresh_cache();
};

struct GpPrediction {
  double mean = 0.0;      // clipped to [0, 1]
  double raw_mean = 0.0;  // unclipped conditional mean
  double sd = 0.0;        // predictive sd including the nugget
};

/// Response y_i = H_i / N_i. Throws FitError (carrying the last valid theta)
/// on optimizer divergence.
GpFit fit(std::span<const SurveyRecord> records, const GpModelSpec& spec);
GpFit fit(std::span<const SurveyRecord> records, const Eigen::MatrixXd& covariates,
          const GpModelSpec& spec);

std::vector<GpPrediction> predict(const GpFit& fit, std::span<const Location> pts);
std::vector<GpPrediction> predict(const GpFit& fit, std::span<const Location> pts,
                                  const Eigen::MatrixXd& covariates);

}  // namespace geoprev::gp
