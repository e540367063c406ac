#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "geoprev/geodata.hpp"

namespace geoprev::sim {

struct AtPoints {
  std::vector<Location> points;
};

struct Uniform {
  std::size_t count = 1000;
};

struct SimConfig {
  Raster raster;  // truth prevalence surface
  std::variant<AtPoints, Uniform> locations = Uniform{};
  std::vector<long> tests_per_site{85};  // one value for every site, or one per site
  double noise_sd = 0.0;                 // sd of Gaussian noise added on the logit scale
  std::uint64_t seed = 1;

  void validate() const;
};

struct DroppedSite {
  std::size_t index = 0;
  Location loc;
  std::string reason;
};

struct SimResult {
  std::vector<SurveyRecord> records;
  std::vector<DroppedSite> dropped;
};

/// `count` locations uniform over the valid cells of `r`: a valid cell is drawn
/// uniformly, then a point uniformly inside it.
std::vector<Location> sample_uniform_locations(const Raster& r, std::size_t count, std::uint64_t seed);

/// Binomial samples at each site. Sites on nodata cells or off the raster are
/// dropped and reported. Each site draws from its own stream derived from
/// (seed, site index).
SimResult simulate(const SimConfig& cfg);

/// Smooth two-bump prevalence surface over `bbox`: inverse-logit of a low
/// baseline plus two Gaussian bumps placed at 30% and 70% of the box.
Raster two_bump_surface(const BBox& bbox, double cell_size);

}  // namespace geoprev::sim
