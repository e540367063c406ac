#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "geoprev/geodata.hpp"
#include "geoprev/model.hpp"

namespace geoprev::eval {

/// Per-record fold in 1..k and the k cluster centroids (lon/lat plane).
struct FoldAssignment {
  std::vector<int> fold;
  std::vector<Location> centroids;

  int k() const { return static_cast<int>(centroids.size()); }
};

/// Lloyd's k-means with k-means++ seeding, best of 50 restarts by
/// within-cluster sum of squares. Each point goes to its nearest centroid,
/// ties to the lower index. Throws ValidationError if k exceeds the number of
/// distinct locations.
FoldAssignment kmeans_folds(std::span<const Location> pts, int k, std::uint64_t seed, int restarts = 50);

/// Within-cluster sum of squared distances for a given assignment.
double within_ss(std::span<const Location> pts, const FoldAssignment& folds);

struct HeldOut {
  int fold = 0;
  double prediction = 0.0;
  double sd = 0.0;
  bool ok = false;  // false when the fold's fit or prediction failed
};

struct FoldFailure {
  int fold = 0;
  std::string message;
};

struct CvResult {
  std::vector<HeldOut> records;                     // aligned with the input
  std::vector<FoldFailure> failures;
  std::vector<std::vector<std::size_t>> training;   // record indices used to fit fold f+1
  bool complete() const { return failures.empty(); }
};

using ModelFactory =
    std::function<std::unique_ptr<FittedModel>(std::span<const SurveyRecord> training)>;

/// Fits on the complement of each fold and predicts the fold. A failing fold
/// is reported in `failures` and its records keep ok = false.
CvResult cv_run(std::span<const SurveyRecord> records, const ModelFactory& factory,
                const FoldAssignment& folds, unsigned threads = 1);
CvResult cv_run(std::span<const SurveyRecord> records, const ModelConfig& config,
                const FoldAssignment& folds, unsigned threads = 1);

/// Prediction intervals yhat +/- SD and yhat +/- 2 SD with endpoints trimmed to
/// [0, 1]. within2_exclusive is the band between one and two SD.
struct Coverage {
  bool within1 = false;
  bool within2 = false;            // cumulative: inside the 2 SD interval
  bool within2_exclusive = false;  // inside 2 SD but not 1 SD
};

Coverage interval_coverage(double y, double yhat, double sd);

/// Width of the trimmed yhat +/- 2 SD interval.
double interval_width(double yhat, double sd);

enum class Stratum { Low, Medium, High };
std::string to_string(Stratum s);

struct DensityPoint {
  double density = 0.0;  // KDE value divided by the maximum over the points
  Stratum stratum = Stratum::High;
};

/// Gaussian product-kernel density at each point with Scott's bandwidth
/// h_d = sd_d * n^(-1/6); density <= 0.2 is Low, <= 0.4 Medium, else High.
std::vector<DensityPoint> density_strata(std::span<const Location> pts);

inline constexpr double kErrorThresholds[3] = {0.05, 0.1, 0.2};

struct MetricsCore {
  std::size_t count = 0;
  double rmse = 0.0;
  std::optional<double> pearson;  // unset when either side has zero variance
  double prop_abs_error[3] = {0.0, 0.0, 0.0};  // |error| < 0.05, 0.1, 0.2
  double within1 = 0.0;            // fraction inside the 1 SD interval
  double within2 = 0.0;            // fraction inside the 2 SD interval (cumulative)
  double within2_exclusive = 0.0;  // fraction between 1 and 2 SD
  double width_mean = 0.0;
  double width_sd = 0.0;
};

struct MetricsReport {
  MetricsCore overall;
  struct StratumReport {
    Stratum stratum;
    MetricsCore metrics;
  };
  std::vector<StratumReport> strata;  // only strata with at least one point
};

MetricsCore metrics_core(std::span<const double> y, std::span<const double> yhat, std::span<const double> sd);

/// Requires equal lengths >= 2. When `strata` is given (one per point) the
/// report also carries per-stratum breakdowns.
MetricsReport metrics(std::span<const double> y, std::span<const double> yhat,
                      std::span<const double> sd, std::span<const Stratum> strata = {});

}  // namespace geoprev::eval
