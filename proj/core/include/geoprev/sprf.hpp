#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "geoprev/cart.hpp"
#include "geoprev/geodata.hpp"

namespace geoprev::sprf {

struct SprfSpec {
  int num_trees = 500;
  std::optional<int> mtry;  // unset: floor(sqrt(number of distance columns))
  int min_node_size = 5;    // nodes with at most this many samples are not split
  DistanceMetric metric = DistanceMetric::GreatCircle;
  std::uint64_t seed = 1;
  unsigned threads = 1;

  void validate() const;
};

/// Quantile regression forest over distance features. Each tree is grown on a
/// bootstrap resample; afterwards every training row is dropped down the tree
/// and the leaf keeps the rows it reached.
struct SprfFit {
  std::vector<cart::Tree> trees;
  std::vector<Location> anchors;
  std::vector<double> y;
  DistanceMetric metric = DistanceMetric::GreatCircle;
};

/// Distances from each query (rows) to each training anchor (columns).
Eigen::MatrixXd build_features(std::span<const Location> train_pts,
                               std::span<const Location> query_pts, DistanceMetric metric);

SprfFit fit(std::span<const SurveyRecord> records, const SprfSpec& spec);

/// Per query, quantiles at `probs` (ascending, in (0, 1)) of the pooled
/// leaf-weighted training distribution.
std::vector<std::vector<double>> predict_quantiles(const SprfFit& fit,
                                                   std::span<const Location> pts,
                                                   std::span<const double> probs);

/// Normal-approximation standard deviation from an interquartile range.
double sd_from_iqr(double q25, double q75);

struct SprfPrediction {
  double median = 0.0;
  double mean = 0.0;  // mean of the pooled distribution
  double q25 = 0.0;
  double q75 = 0.0;
  double sd = 0.0;    // sd_from_iqr(q25, q75)
};

std::vector<SprfPrediction> predict(const SprfFit& fit, std::span<const Location> pts);

/// Pooled training-row weights for one query; sums to 1.
std::vector<std::pair<std::int32_t, double>> leaf_weights(const SprfFit& fit, const Location& q);

}  // namespace geoprev::sprf
