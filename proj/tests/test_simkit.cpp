#include <cmath>

#include <gtest/gtest.h>

#include "geoprev/errors.hpp"
#include "geoprev/link.hpp"
#include "geoprev/simkit.hpp"

using namespace geoprev;

namespace {

Raster constant_raster(double p) { return Raster({0.0, 0.0}, 1.0, 2, 2, p); }

std::vector<SurveyRecord> replicates(double p, long n, double noise_sd, std::size_t reps, std::uint64_t seed) {
  sim::SimConfig c;
  c.raster = constant_raster(p);
  c.locations = sim::AtPoints{std::vector<Location>(reps, Location{0.5, 0.5})};
  c.tests_per_site = {n};
  c.noise_sd = noise_sd;
  c.seed = seed;
  return sim::simulate(c).records;
}

struct Moments {
  double mean = 0.0;
  double var = 0.0;
};

Moments moments(const std::vector<SurveyRecord>& recs, bool as_prevalence) {
  Moments m;
  for (const auto& r : recs) m.mean += as_prevalence ? r.prevalence() : static_cast<double>(r.positive);
  m.mean /= static_cast<double>(recs.size());
  for (const auto& r : recs) {
    const double v = as_prevalence ? r.prevalence() : static_cast<double>(r.positive);
    m.var += (v - m.mean) * (v - m.mean);
  }
  m.var /= static_cast<double>(recs.size() - 1);
  return m;
}

}  // namespace

TEST(SampleLocations, SingleValidCell) {
  Raster r({0.0, 0.0}, 0.5, 3, 3, 0.2);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) r.set_nodata(i, j, !(i == 1 && j == 2));
  for (const auto& p : sim::sample_uniform_locations(r, 500, 4)) {
    const auto c = r.cell_of(p);
    ASSERT_TRUE(c.has_value());
    EXPECT_EQ(c->row, 1u);
    EXPECT_EQ(c->col, 2u);
  }
}

TEST(SampleLocations, ZeroCountAndAllNodataThrow) {
  Raster r({0.0, 0.0}, 1.0, 1, 2, 0.1);
  EXPECT_THROW(sim::sample_uniform_locations(r, 0, 1), ValidationError);
  r.set_nodata(0, 0);
  r.set_nodata(0, 1);
  EXPECT_THROW(sim::sample_uniform_locations(r, 5, 1), ValidationError);
}

TEST(SampleLocations, TwoCellsBalanced) {
  const Raster r({0.0, 0.0}, 1.0, 1, 2, 0.1);
  const std::size_t n = 100000;
  std::size_t left = 0;
  for (const auto& p : sim::sample_uniform_locations(r, n, 7))
    if (r.cell_of(p)->col == 0) ++left;
  const double sigma = std::sqrt(n * 0.25);
  EXPECT_NEAR(static_cast<double>(left), n / 2.0, 3.0 * sigma);
}

TEST(SampleLocations, DeterministicUnderSeed) {
  const Raster r({0.0, 0.0}, 0.1, 20, 20, 0.1);
  EXPECT_EQ(sim::sample_uniform_locations(r, 300, 9), sim::sample_uniform_locations(r, 300, 9));
  EXPECT_NE(sim::sample_uniform_locations(r, 300, 9), sim::sample_uniform_locations(r, 300, 10));
}

TEST(Simulate, DegenerateProbabilities) {
  for (double noise : {0.0, 1.2}) {
    for (const auto& r : replicates(0.0, 85, noise, 500, 3)) EXPECT_EQ(r.positive, 0);
    for (const auto& r : replicates(1.0, 85, noise, 500, 3)) EXPECT_EQ(r.positive, 85);
  }
}

TEST(Simulate, BinomialMoments) {
  const auto recs = replicates(0.3, 85, 0.0, 10000, 21);
  const auto m = moments(recs, false);
  EXPECT_NEAR(m.mean, 25.5, 3.0 * std::sqrt(17.85 / 10000.0));
  EXPECT_NEAR(m.var, 17.85, 0.1 * 17.85);
}

TEST(Simulate, NoiseOverdisperses) {
  const auto m = moments(replicates(0.3, 85, 1.2, 10000, 22), true);
  EXPECT_GT(m.var, 0.3 * 0.7 / 85.0);
}

TEST(Simulate, VarianceMonotoneInNoise) {
  double prev = 0.0;
  for (int k = 0; k <= 6; ++k) {
    const double sd = 0.2 * k;
    const double v = moments(replicates(0.3, 85, sd, 10000, 100 + k), true).var;
    EXPECT_GE(v, prev) << "noise_sd=" << sd;
    prev = v;
  }
}

TEST(Simulate, DeterministicUnderSeed) {
  sim::SimConfig c;
  c.raster = sim::two_bump_surface({{0, 0}, {2, 2}}, 0.1);
  c.locations = sim::Uniform{400};
  c.noise_sd = 0.4;
  c.seed = 5;
  EXPECT_EQ(sim::simulate(c).records, sim::simulate(c).records);
  const auto a = sim::simulate(c).records;
  c.seed = 6;
  EXPECT_NE(a, sim::simulate(c).records);
}

TEST(Simulate, PerSiteTests) {
  sim::SimConfig c;
  c.raster = constant_raster(0.5);
  c.locations = sim::AtPoints{{{0.5, 0.5}, {1.5, 0.5}, {0.5, 1.5}}};
  c.tests_per_site = {10, 20, 30};
  const auto recs = sim::simulate(c).records;
  ASSERT_EQ(recs.size(), 3u);
  EXPECT_EQ(recs[0].examined, 10);
  EXPECT_EQ(recs[2].examined, 30);
  c.tests_per_site = {10, 20};
  EXPECT_THROW(sim::simulate(c), ValidationError);
}

TEST(Simulate, NodataAndOffRasterSitesDropped) {
  sim::SimConfig c;
  c.raster = constant_raster(0.5);
  c.raster.set_nodata(0, 0);  // top-left cell
  c.locations = sim::AtPoints{{{0.5, 0.5}, {0.5, 1.5}, {9.0, 9.0}}};
  const auto res = sim::simulate(c);
  ASSERT_EQ(res.records.size(), 1u);
  EXPECT_EQ(res.records[0].loc, (Location{0.5, 0.5}));
  ASSERT_EQ(res.dropped.size(), 2u);
  EXPECT_EQ(res.dropped[0].index, 1u);
  EXPECT_EQ(res.dropped[1].index, 2u);
}

TEST(Simulate, ValueOutsideUnitIntervalThrows) {
  sim::SimConfig c;
  c.raster = constant_raster(1.2);
  c.locations = sim::Uniform{3};
  EXPECT_THROW(sim::simulate(c), ValidationError);
}

TEST(Simulate, ConfigValidation) {
  sim::SimConfig c;
  c.raster = constant_raster(0.5);
  c.noise_sd = -0.1;
  EXPECT_THROW(c.validate(), ValidationError);
  c.noise_sd = 0.0;
  c.locations = sim::Uniform{0};
  EXPECT_THROW(c.validate(), ValidationError);
}

TEST(TwoBump, ValuesAreProbabilities) {
  const auto r = sim::two_bump_surface({{0, 0}, {4, 3}}, 0.1);
  double lo = 1.0, hi = 0.0;
  for (double v : r.values()) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  EXPECT_GT(lo, 0.0);
  EXPECT_LT(hi, 1.0);
  EXPECT_GT(hi - lo, 0.2);
}
