#include <algorithm>
#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "geoprev/errors.hpp"
#include "geoprev/sprf.hpp"
#include "support.hpp"

using namespace geoprev;
using geoprev::testutil::random_points;

namespace {

std::vector<SurveyRecord> random_records(std::size_t n, std::mt19937_64& rng) {
  std::vector<SurveyRecord> out;
  std::uniform_int_distribution<long> pos(0, 85);
  for (const auto& p : random_points(n, rng)) out.push_back({p, 85, pos(rng)});
  return out;
}

sprf::SprfSpec small_spec() {
  sprf::SprfSpec s;
  s.num_trees = 100;
  s.metric = DistanceMetric::Euclidean;
  return s;
}

}  // namespace

TEST(SprfFeatures, SelfQueryIsDistanceMatrix) {
  std::mt19937_64 rng(1);
  const auto pts = random_points(12, rng);
  EXPECT_EQ(sprf::build_features(pts, pts, DistanceMetric::GreatCircle),
            distance_matrix(pts, DistanceMetric::GreatCircle));
  const std::vector<Location> one{{2, 3}};
  const auto f = sprf::build_features(one, one, DistanceMetric::Euclidean);
  ASSERT_EQ(f.rows(), 1);
  EXPECT_EQ(f(0, 0), 0.0);
}

TEST(SprfFeatures, MatchesElementwiseLoop) {
  std::mt19937_64 rng(2);
  const auto train = random_points(7, rng), query = random_points(5, rng);
  const auto f = sprf::build_features(train, query, DistanceMetric::Euclidean);
  ASSERT_EQ(f.rows(), 5);
  ASSERT_EQ(f.cols(), 7);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 7; ++j) EXPECT_EQ(f(i, j), distance(query[i], train[j], DistanceMetric::Euclidean));
}

TEST(SprfFit, ConstantResponse) {
  std::mt19937_64 rng(3);
  std::vector<SurveyRecord> recs;
  for (const auto& p : random_points(40, rng)) recs.push_back({p, 10, 3});
  const auto f = sprf::fit(recs, small_spec());
  const std::vector<double> probs{0.1, 0.5, 0.9};
  for (const auto& q : sprf::predict_quantiles(f, random_points(20, rng), probs))
    for (double v : q) EXPECT_EQ(v, 0.3);
}

TEST(SprfFit, TwoPointsRecoveredInBag) {
  const std::vector<SurveyRecord> recs{{{0, 0}, 10, 1}, {{5, 5}, 10, 8}};
  auto spec = small_spec();
  spec.num_trees = 500;
  spec.min_node_size = 1;
  const auto f = sprf::fit(recs, spec);
  const std::vector<Location> q{recs[0].loc, recs[1].loc};
  const auto p = sprf::predict(f, q);
  EXPECT_EQ(p[0].median, 0.1);
  EXPECT_EQ(p[1].median, 0.8);
}

TEST(SprfFit, DeterministicUnderSeed) {
  std::mt19937_64 rng(4);
  const auto recs = random_records(80, rng);
  const auto q = random_points(30, rng);
  auto spec = small_spec();
  spec.seed = 77;
  const auto a = sprf::predict(sprf::fit(recs, spec), q);
  spec.threads = 3;
  const auto b = sprf::predict(sprf::fit(recs, spec), q);
  for (std::size_t i = 0; i < q.size(); ++i) {
    EXPECT_EQ(a[i].median, b[i].median);
    EXPECT_EQ(a[i].mean, b[i].mean);
    EXPECT_EQ(a[i].sd, b[i].sd);
  }
}

TEST(SprfQuantiles, MonotoneAndInSupport) {
  std::mt19937_64 rng(5);
  const auto recs = random_records(60, rng);
  const auto f = sprf::fit(recs, small_spec());
  std::vector<double> ys;
  for (const auto& r : recs) ys.push_back(r.prevalence());
  const std::vector<double> probs{0.05, 0.25, 0.5, 0.75, 0.95};
  for (const auto& q : sprf::predict_quantiles(f, random_points(100, rng, -3, 13), probs)) {
    for (std::size_t k = 0; k < q.size(); ++k) {
      if (k > 0) EXPECT_LE(q[k - 1], q[k]);
      EXPECT_NE(std::find(ys.begin(), ys.end(), q[k]), ys.end());
    }
  }
}

TEST(SprfQuantiles, SingleLeafIsEmpiricalQuantile) {
  std::mt19937_64 rng(6);
  const auto recs = random_records(21, rng);
  auto spec = small_spec();
  spec.num_trees = 1;
  spec.min_node_size = 100;
  const auto f = sprf::fit(recs, spec);
  std::vector<double> ys;
  for (const auto& r : recs) ys.push_back(r.prevalence());
  std::sort(ys.begin(), ys.end());
  const std::vector<double> probs{0.1, 0.25, 0.5, 0.75, 0.9};
  const std::vector<Location> q{{3, 3}};
  const auto got = sprf::predict_quantiles(f, q, probs)[0];
  for (std::size_t k = 0; k < probs.size(); ++k) {
    const auto idx = static_cast<std::size_t>(std::ceil(probs[k] * ys.size() - 1e-9)) - 1;
    EXPECT_EQ(got[k], ys[idx]) << probs[k];
  }
}

TEST(SprfQuantiles, RejectsBadProbs) {
  std::mt19937_64 rng(7);
  const auto f = sprf::fit(random_records(10, rng), small_spec());
  const std::vector<Location> q{{1, 1}};
  EXPECT_THROW(sprf::predict_quantiles(f, q, std::vector<double>{}), ValidationError);
  EXPECT_THROW(sprf::predict_quantiles(f, q, std::vector<double>{0.6, 0.4}), ValidationError);
}

TEST(SprfWeights, SumToOne) {
  std::mt19937_64 rng(8);
  const auto f = sprf::fit(random_records(50, rng), small_spec());
  for (const auto& q : random_points(10, rng)) {
    double s = 0.0;
    for (const auto& [i, w] : sprf::leaf_weights(f, q)) s += w;
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(SdFromIqr, Values) {
  EXPECT_DOUBLE_EQ(sprf::sd_from_iqr(0.0, 1.34898), 1.0);
  EXPECT_EQ(sprf::sd_from_iqr(0.4, 0.4), 0.0);
  EXPECT_NEAR(sprf::sd_from_iqr(0.1, 0.1 + 0.26980), 0.2, 1e-5);
  EXPECT_THROW(sprf::sd_from_iqr(0.5, 0.4), ValidationError);
}

TEST(SprfBanding, RingPredictionsConstant) {
  // Tight cluster of high-prevalence sites: every query on a ring around it
  // sees the same distance ordering, so it lands in the same leaves.
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-0.005, 0.005);
  std::uniform_int_distribution<long> pos(40, 80);
  std::vector<SurveyRecord> recs;
  for (int i = 0; i < 30; ++i) recs.push_back({{5.0 + u(rng), 5.0 + u(rng)}, 85, pos(rng)});
  auto spec = small_spec();
  spec.num_trees = 200;
  const auto f = sprf::fit(recs, spec);
  for (double radius : {0.5, 1.0, 3.0}) {
    std::vector<Location> ring;
    for (int k = 0; k < 72; ++k) {
      const double a = 2.0 * 3.141592653589793 * k / 72.0;
      ring.push_back({5.0 + radius * std::cos(a), 5.0 + radius * std::sin(a)});
    }
    const auto p = sprf::predict(f, ring);
    for (const auto& x : p) {
      EXPECT_EQ(x.median, p[0].median);
      EXPECT_EQ(x.sd, p[0].sd);
    }
  }
}
