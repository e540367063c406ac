#include <cmath>
#include <numbers>
#include <random>
#include <mutex>
#include <set>

#include <gtest/gtest.h>

#include "geoprev/errors.hpp"
#include "geoprev/evalkit.hpp"
#include "support.hpp"

using namespace geoprev;
using geoprev::testutil::random_points;

namespace {

// Predicts the prevalence of the nearest training record.
class NearestModel final : public FittedModel {
 public:
  explicit NearestModel(std::span<const SurveyRecord> train) : train_(train.begin(), train.end()) {}
  ModelKind kind() const override { return ModelKind::Constant; }
  std::vector<PointPrediction> predict(std::span<const Location> pts) const override {
    std::vector<PointPrediction> out;
    for (const auto& p : pts) {
      const SurveyRecord* best = &train_.front();
      for (const auto& r : train_)
        if (distance(p, r.loc, DistanceMetric::Euclidean) < distance(p, best->loc, DistanceMetric::Euclidean))
          best = &r;
      out.push_back({best->prevalence(), 0.0});
    }
    return out;
  }

 private:
  std::vector<SurveyRecord> train_;
};

std::vector<SurveyRecord> random_records(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<SurveyRecord> recs;
  std::uniform_int_distribution<long> h(0, 85);
  for (const auto& p : random_points(n, rng, 0.0, 5.0)) recs.push_back({p, 85, h(rng)});
  return recs;
}

double sq(double x) { return x * x; }

}  // namespace

TEST(KMeans, OneFoldPerDistinctPoint) {
  std::mt19937_64 rng(1);
  const auto pts = random_points(12, rng, 0.0, 1.0);
  const auto f = eval::kmeans_folds(pts, 12, 3);
  EXPECT_EQ(std::set<int>(f.fold.begin(), f.fold.end()).size(), 12u);
  EXPECT_NEAR(eval::within_ss(pts, f), 0.0, 1e-24);
}

TEST(KMeans, SingleFold) {
  std::mt19937_64 rng(2);
  const auto pts = random_points(30, rng, 0.0, 1.0);
  const auto f = eval::kmeans_folds(pts, 1, 3);
  for (int v : f.fold) EXPECT_EQ(v, 1);
  ASSERT_EQ(f.k(), 1);
  double mx = 0.0, my = 0.0;
  for (const auto& p : pts) {
    mx += p.lon / 30.0;
    my += p.lat / 30.0;
  }
  EXPECT_NEAR(f.centroids[0].lon, mx, 1e-12);
  EXPECT_NEAR(f.centroids[0].lat, my, 1e-12);
}

TEST(KMeans, TooManyFoldsThrows) {
  const std::vector<Location> pts{{0, 0}, {0, 0}, {1, 1}};
  EXPECT_THROW(eval::kmeans_folds(pts, 3, 1), ValidationError);
  EXPECT_NO_THROW(eval::kmeans_folds(pts, 2, 1));
}

TEST(KMeans, SeparatedClustersMatchBruteForcePartition) {
  std::mt19937_64 rng(3);
  std::vector<Location> pts = random_points(10, rng, 0.0, 1.0);
  for (const auto& p : random_points(10, rng, 0.0, 1.0)) pts.push_back({p.lon + 10.0, p.lat + 3.0});
  const auto f = eval::kmeans_folds(pts, 2, 4);

  const std::size_t n = pts.size();
  double best = std::numeric_limits<double>::infinity();
  std::uint32_t best_mask = 0;
  for (std::uint32_t mask = 1; mask < (1u << (n - 1)); ++mask) {
    double ss = 0.0;
    for (int side = 0; side < 2; ++side) {
      double sx = 0.0, sy = 0.0, c = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        if (((mask >> i) & 1u) == static_cast<std::uint32_t>(side)) {
          sx += pts[i].lon;
          sy += pts[i].lat;
          c += 1.0;
        }
      for (std::size_t i = 0; i < n; ++i)
        if (((mask >> i) & 1u) == static_cast<std::uint32_t>(side))
          ss += sq(pts[i].lon - sx / c) + sq(pts[i].lat - sy / c);
    }
    if (ss < best) {
      best = ss;
      best_mask = mask;
    }
  }
  EXPECT_NEAR(eval::within_ss(pts, f), best, 1e-9);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      EXPECT_EQ(f.fold[i] == f.fold[j], ((best_mask >> i) & 1u) == ((best_mask >> j) & 1u));
  for (std::size_t i = 1; i < 10; ++i) EXPECT_EQ(f.fold[i], f.fold[0]);
}

TEST(KMeans, NearestCentroidAndDeterminism) {
  std::mt19937_64 rng(4);
  const auto pts = random_points(300, rng, 0.0, 10.0);
  const auto f = eval::kmeans_folds(pts, 10, 7);
  ASSERT_EQ(f.k(), 10);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    int best = 0;
    double bd = std::numeric_limits<double>::infinity();
    for (int c = 0; c < 10; ++c) {
      const double d = sq(pts[i].lon - f.centroids[c].lon) + sq(pts[i].lat - f.centroids[c].lat);
      if (d < bd) {
        bd = d;
        best = c;
      }
    }
    EXPECT_EQ(f.fold[i], best + 1);
  }
  const auto g = eval::kmeans_folds(pts, 10, 7);
  EXPECT_EQ(f.fold, g.fold);
}

TEST(CvRun, DuplicatedDataInterpolated) {
  auto recs = random_records(10, 5);
  const std::size_t n = recs.size();
  eval::FoldAssignment folds;
  folds.centroids = {{0, 0}, {1, 1}};
  for (std::size_t i = 0; i < n; ++i) recs.push_back(recs[i]);
  for (std::size_t i = 0; i < 2 * n; ++i) folds.fold.push_back(i < n ? 1 : 2);
  const auto res = eval::cv_run(
      recs, [](std::span<const SurveyRecord> t) { return std::make_unique<NearestModel>(t); }, folds);
  ASSERT_EQ(res.records.size(), recs.size());
  EXPECT_TRUE(res.complete());
  for (std::size_t i = 0; i < recs.size(); ++i) {
    EXPECT_TRUE(res.records[i].ok);
    EXPECT_EQ(res.records[i].prediction, recs[i].prevalence());
    EXPECT_EQ(res.records[i].fold, folds.fold[i]);
  }
}

TEST(CvRun, ConstantBaselineIsComplementMean) {
  const auto recs = random_records(57, 6);
  const auto folds = eval::kmeans_folds(locations_of(recs), 5, 2);
  ModelConfig cfg;
  cfg.kind = ModelKind::Constant;
  const auto res = eval::cv_run(recs, cfg, folds);
  ASSERT_EQ(res.records.size(), recs.size());
  for (std::size_t i = 0; i < recs.size(); ++i) {
    double s = 0.0;
    int c = 0;
    for (std::size_t j = 0; j < recs.size(); ++j)
      if (folds.fold[j] != folds.fold[i]) {
        s += recs[j].prevalence();
        ++c;
      }
    EXPECT_NEAR(res.records[i].prediction, s / c, 1e-12);
  }
}

TEST(CvRun, NeverLeaksHeldOutRecords) {
  const auto recs = random_records(80, 7);
  const auto folds = eval::kmeans_folds(locations_of(recs), 6, 2);
  std::vector<std::vector<SurveyRecord>> seen;
  std::mutex mu;
  const auto res = eval::cv_run(
      recs,
      [&](std::span<const SurveyRecord> t) {
        std::lock_guard lock(mu);
        seen.emplace_back(t.begin(), t.end());
        return std::make_unique<NearestModel>(t);
      },
      folds, 3);
  ASSERT_EQ(res.training.size(), 6u);
  for (int f = 1; f <= 6; ++f) {
    const auto& idx = res.training[static_cast<std::size_t>(f - 1)];
    const std::set<std::size_t> s(idx.begin(), idx.end());
    for (std::size_t i = 0; i < recs.size(); ++i) EXPECT_EQ(s.count(i) == 1, folds.fold[i] != f);
  }
  std::size_t total = 0;
  for (const auto& t : seen) total += t.size();
  EXPECT_EQ(total, 5 * recs.size());
}

TEST(CvRun, FailingFoldIsReported) {
  const auto recs = random_records(40, 8);
  const auto folds = eval::kmeans_folds(locations_of(recs), 4, 2);
  const auto held_out = static_cast<std::size_t>(std::count(folds.fold.begin(), folds.fold.end(), 3));
  const auto res = eval::cv_run(
      recs,
      [&](std::span<const SurveyRecord> t) -> std::unique_ptr<FittedModel> {
        if (t.size() == recs.size() - held_out) throw FitError("boom");
        return std::make_unique<NearestModel>(t);
      },
      folds);
  ASSERT_FALSE(res.complete());
  ASSERT_GE(res.failures.size(), 1u);
  bool fold3 = false;
  for (const auto& f : res.failures) fold3 |= f.fold == 3 && f.message.find("boom") != std::string::npos;
  EXPECT_TRUE(fold3);
  for (std::size_t i = 0; i < recs.size(); ++i)
    if (folds.fold[i] == 3) EXPECT_FALSE(res.records[i].ok);
}

TEST(CvRun, NeedsTwoFolds) {
  const auto recs = random_records(5, 9);
  const auto folds = eval::kmeans_folds(locations_of(recs), 1, 2);
  ModelConfig cfg;
  cfg.kind = ModelKind::Constant;
  EXPECT_THROW(eval::cv_run(recs, cfg, folds), ValidationError);
}

TEST(Coverage, Examples) {
  EXPECT_TRUE(eval::interval_coverage(0.5, 0.5, 0.1).within1);
  const auto c = eval::interval_coverage(0.7, 0.5, 0.1);
  EXPECT_FALSE(c.within1);
  EXPECT_TRUE(c.within2);
  EXPECT_TRUE(c.within2_exclusive);
  EXPECT_TRUE(eval::interval_coverage(1.0, 0.95, 0.1).within1);
  EXPECT_NEAR(eval::interval_width(0.95, 0.1), 1.0 - 0.75, 1e-15);
  EXPECT_NEAR(eval::interval_width(0.5, 0.1), 0.4, 1e-15);
  EXPECT_THROW(eval::interval_coverage(0.5, 0.5, -0.1), ValidationError);
}

TEST(Coverage, CumulativeContainsOneSd) {
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> u(0.0, 1.0), s(0.0, 0.4);
  for (int i = 0; i < 10000; ++i) {
    const auto c = eval::interval_coverage(u(rng), u(rng), s(rng));
    if (c.within1) EXPECT_TRUE(c.within2);
    EXPECT_EQ(c.within2_exclusive, c.within2 && !c.within1);
  }
}

TEST(Metrics, PerfectPredictions) {
  const std::vector<double> y{0.1, 0.4, 0.8}, sd{0.05, 0.05, 0.05};
  const auto m = eval::metrics(y, y, sd).overall;
  EXPECT_EQ(m.rmse, 0.0);
  for (double p : m.prop_abs_error) EXPECT_EQ(p, 1.0);
  ASSERT_TRUE(m.pearson.has_value());
  EXPECT_NEAR(*m.pearson, 1.0, 1e-15);
}

TEST(Metrics, ReversedPair) {
  const std::vector<double> y{0.0, 1.0}, yhat{1.0, 0.0}, sd{0.0, 0.0};
  const auto m = eval::metrics(y, yhat, sd).overall;
  EXPECT_DOUBLE_EQ(m.rmse, 1.0);
  ASSERT_TRUE(m.pearson.has_value());
  EXPECT_DOUBLE_EQ(*m.pearson, -1.0);
}

TEST(Metrics, ConstantPredictionHasNoCorrelation) {
  const std::vector<double> y{0.1, 0.3, 0.6}, yhat{0.3, 0.3, 0.3}, sd{0.1, 0.1, 0.1};
  EXPECT_FALSE(eval::metrics(y, yhat, sd).overall.pearson.has_value());
  const std::vector<double> one{0.3};
  EXPECT_THROW(eval::metrics(one, one, one), ValidationError);
}

TEST(Metrics, MatchesRecomputation) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0), s(0.0, 0.3);
  const int n = 200;
  Eigen::ArrayXd y(n), yhat(n), sd(n);
  for (int i = 0; i < n; ++i) {
    y[i] = u(rng);
    yhat[i] = std::clamp(y[i] + 0.15 * (u(rng) - 0.5) * 2.0, 0.0, 1.0);
    sd[i] = s(rng);
  }
  const std::vector<double> vy(y.begin(), y.end()), vp(yhat.begin(), yhat.end()), vs(sd.begin(), sd.end());
  const auto m = eval::metrics(vy, vp, vs).overall;

  const Eigen::ArrayXd err = y - yhat;
  EXPECT_NEAR(m.rmse, std::sqrt(err.square().mean()), 1e-12);
  const Eigen::ArrayXd cy = y - y.mean(), cp = yhat - yhat.mean();
  EXPECT_NEAR(*m.pearson, (cy * cp).sum() / std::sqrt(cy.square().sum() * cp.square().sum()), 1e-12);
  const double thr[3] = {0.05, 0.1, 0.2};
  for (int t = 0; t < 3; ++t) {
    EXPECT_NEAR(m.prop_abs_error[t], (err.abs() < thr[t]).cast<double>().mean(), 1e-12);
    if (t > 0) EXPECT_GE(m.prop_abs_error[t], m.prop_abs_error[t - 1]);
  }
  const Eigen::ArrayXd lo1 = (yhat - sd).max(0.0), hi1 = (yhat + sd).min(1.0);
  const Eigen::ArrayXd lo2 = (yhat - 2 * sd).max(0.0), hi2 = (yhat + 2 * sd).min(1.0);
  const auto in1 = (y >= lo1 && y <= hi1), in2 = (y >= lo2 && y <= hi2);
  EXPECT_NEAR(m.within1, in1.cast<double>().mean(), 1e-12);
  EXPECT_NEAR(m.within2, in2.cast<double>().mean(), 1e-12);
  EXPECT_NEAR(m.within2_exclusive, (in2 && !in1).cast<double>().mean(), 1e-12);
  EXPECT_GE(m.within2, m.within1);
  const Eigen::ArrayXd w = hi2 - lo2;
  EXPECT_NEAR(m.width_mean, w.mean(), 1e-12);
  EXPECT_NEAR(m.width_sd, std::sqrt((w - w.mean()).square().sum() / (n - 1)), 1e-12);
}

TEST(Metrics, StrataBreakdown) {
  const std::vector<double> y{0.1, 0.2, 0.3, 0.4}, yhat{0.1, 0.25, 0.3, 0.5}, sd(4, 0.1);
  const std::vector<eval::Stratum> st{eval::Stratum::Low, eval::Stratum::High, eval::Stratum::Low,
                                      eval::Stratum::High};
  const auto r = eval::metrics(y, yhat, sd, st);
  ASSERT_EQ(r.strata.size(), 2u);
  EXPECT_EQ(r.strata[0].stratum, eval::Stratum::Low);
  EXPECT_EQ(r.strata[0].metrics.count, 2u);
  EXPECT_EQ(r.strata[0].metrics.rmse, 0.0);
  EXPECT_NEAR(r.strata[1].metrics.rmse, std::sqrt((0.05 * 0.05 + 0.1 * 0.1) / 2.0), 1e-15);
}

TEST(Density, TightClusterAllHigh) {
  std::vector<Location> pts{{3.0, 4.0}};
  for (int i = 0; i < 12; ++i) {
    const double a = 2.0 * std::numbers::pi * i / 12.0;
    pts.push_back({3.0 + 0.005 * std::cos(a), 4.0 + 0.005 * std::sin(a)});
  }
  for (const auto& d : eval::density_strata(pts))
    EXPECT_EQ(d.stratum, eval::Stratum::High);
}

TEST(Density, IsolatedPointIsLow) {
  std::mt19937_64 rng(13);
  auto pts = random_points(100, rng, 0.0, 1.0);
  pts.push_back({8.0, 8.0});
  const auto d = eval::density_strata(pts);
  EXPECT_EQ(d.back().stratum, eval::Stratum::Low);
}

TEST(Density, IdenticalPointsAllOne) {
  const std::vector<Location> pts(5, Location{1.0, 2.0});
  for (const auto& d : eval::density_strata(pts)) {
    EXPECT_EQ(d.density, 1.0);
    EXPECT_EQ(d.stratum, eval::Stratum::High);
  }
}

TEST(Density, MatchesKernelSum) {
  std::mt19937_64 rng(14);
  const auto pts = random_points(50, rng, -3.0, 3.0);
  const int n = 50;
  Eigen::ArrayXd x(n), y(n);
  for (int i = 0; i < n; ++i) {
    x[i] = pts[i].lon;
    y[i] = pts[i].lat;
  }
  const double scott = std::pow(n, -1.0 / 6.0);
  const double hx = std::sqrt((x - x.mean()).square().sum() / (n - 1)) * scott;
  const double hy = std::sqrt((y - y.mean()).square().sum() / (n - 1)) * scott;
  Eigen::ArrayXd k = Eigen::ArrayXd::Zero(n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      k[i] += std::exp(-0.5 * sq((x[i] - x[j]) / hx)) * std::exp(-0.5 * sq((y[i] - y[j]) / hy)) /
              (2.0 * std::numbers::pi * hx * hy * n);
  const auto d = eval::density_strata(pts);
  for (int i = 0; i < n; ++i) {
    EXPECT_NEAR(d[static_cast<std::size_t>(i)].density, k[i] / k.maxCoeff(), 1e-10);
    const auto want = k[i] / k.maxCoeff() <= 0.2 ? eval::Stratum::Low
                      : k[i] / k.maxCoeff() <= 0.4 ? eval::Stratum::Medium
                                                   : eval::Stratum::High;
    EXPECT_EQ(d[static_cast<std::size_t>(i)].stratum, want);
  }
}
