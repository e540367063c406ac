#include <chrono>
#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "frk_oracle.hpp"
#include "geoprev/errors.hpp"
#include "geoprev/frk.hpp"
#include "geoprev/link.hpp"
#include "geoprev/model.hpp"
#include "geoprev/simkit.hpp"
#include "support.hpp"

using namespace geoprev;
using geoprev::testutil::random_points;

namespace {

const BBox kUnit{{0, 0}, {1, 1}};

std::vector<SurveyRecord> gaussian_records(std::mt19937_64& rng, std::size_t n) {
  std::vector<SurveyRecord> recs;
  std::normal_distribution<double> z(0.0, 0.05);
  for (const auto& p : random_points(n, rng, 0.0, 3.0)) {
    const double v = 0.4 + 0.2 * std::sin(2.0 * p.lon) * std::cos(1.5 * p.lat) + z(rng);
    recs.push_back({p, 100000, std::lround(std::clamp(v, 0.0, 1.0) * 100000)});
  }
  return recs;
}

frk::Hyper some_hyper(const frk::BasisSet& b) {
  frk::Hyper h;
  h.beta0 = 0.35;
  for (std::size_t k = 0; k < b.layers.size(); ++k) {
    h.tau.push_back(2.0 + k);
    h.rho.push_back(0.3 + 0.2 * k);
  }
  h.sigma2_xi = 0.004;
  return h;
}

}  // namespace

TEST(FrkBasis, OneResolutionNineFunctions) {
  const auto b = frk::place_basis(kUnit, 1, 1, 1.25);
  ASSERT_EQ(b.size(), 9u);
  for (double a : b.apertures) EXPECT_DOUBLE_EQ(a, 1.25 * b.layers[0].spacing);
  EXPECT_EQ(b.layers[0].nx, 3u);
  EXPECT_EQ(b.layers[0].ny, 3u);
}

TEST(FrkBasis, TwoResolutionsFortyFive) {
  const auto b = frk::place_basis(kUnit, 2, 1, 1.25);
  ASSERT_EQ(b.size(), 45u);
  EXPECT_EQ(std::count(b.resolution.begin(), b.resolution.end(), 2), 36);
  EXPECT_LT(b.layers[1].aperture, b.layers[0].aperture);
}

TEST(FrkBasis, RegularIncreasesCountShrinksApertures) {
  const BBox box{{0, 0}, {4, 2.5}};
  const auto a = frk::place_basis(box, 2, 1, 1.25), b = frk::place_basis(box, 2, 2, 1.25);
  EXPECT_GT(b.size(), a.size());
  for (std::size_t k = 0; k < 2; ++k) EXPECT_LT(b.layers[k].aperture, a.layers[k].aperture);
}

TEST(FrkBasis, CoversBoundingBox) {
  const BBox box{{2, -1}, {7, 2}};
  const auto b = frk::place_basis(box, 2, 1, 1.25);
  for (const auto& L : b.layers) {
    double lo_x = 1e9, hi_x = -1e9, lo_y = 1e9, hi_y = -1e9;
    for (std::size_t i = L.offset; i < L.offset + L.nx * L.ny; ++i) {
      lo_x = std::min(lo_x, b.centres[i].lon);
      hi_x = std::max(hi_x, b.centres[i].lon);
      lo_y = std::min(lo_y, b.centres[i].lat);
      hi_y = std::max(hi_y, b.centres[i].lat);
    }
    EXPECT_LE(lo_x, box.lo.lon);
    EXPECT_GE(hi_x, box.hi.lon);
    EXPECT_LE(lo_y, box.lo.lat);
    EXPECT_GE(hi_y, box.hi.lat);
  }
}

TEST(FrkBasis, DegenerateThrows) {
  EXPECT_THROW(frk::place_basis({{0, 0}, {0, 1}}, 2, 1, 1.25), ValidationError);
  EXPECT_THROW(frk::place_basis(kUnit, 0, 1, 1.25), ValidationError);
}

TEST(FrkBasisEval, CentreAndAperture) {
  const auto b = frk::place_basis(kUnit, 2, 1, 1.25);
  const std::vector<Location> pts{b.centres[4], {b.centres[4].lon + b.apertures[4], b.centres[4].lat}};
  const auto phi = frk::basis_eval(b, pts);
  EXPECT_EQ(phi(0, 4), 1.0);
  EXPECT_NEAR(phi(1, 4), std::exp(-0.5), 1e-15);
  EXPECT_NEAR(phi(1, 4), 0.6065306597, 1e-9);
}

TEST(FrkBasisEval, MatchesFormulaLoop) {
  std::mt19937_64 rng(1);
  const auto b = frk::place_basis(kUnit, 2, 1, 1.25);
  const auto pts = random_points(10, rng, 0.0, 1.0);
  const auto phi = frk::basis_eval(b, pts);
  for (int i = 0; i < 10; ++i)
    for (std::size_t l = 0; l < b.size(); ++l) {
      const double d2 = std::pow(pts[i].lon - b.centres[l].lon, 2) + std::pow(pts[i].lat - b.centres[l].lat, 2);
      const double want = std::exp(-d2 / (2.0 * b.apertures[l] * b.apertures[l]));
      EXPECT_NEAR(phi(i, static_cast<Eigen::Index>(l)), want, 1e-15);
      EXPECT_GT(phi(i, static_cast<Eigen::Index>(l)), 0.0);
      EXPECT_LE(phi(i, static_cast<Eigen::Index>(l)), 1.0);
    }
}

TEST(FrkBau, IncidenceRowsSumToOne) {
  std::mt19937_64 rng(2);
  std::vector<SurveyRecord> recs;
  for (const auto& p : random_points(200, rng, -1.0, 1.0)) recs.push_back({p, 10, 1});
  std::vector<frk::BauKey> keys;
  const auto cz = frk::incidence_matrix(recs, 0.25, &keys);
  const Eigen::MatrixXd dense(cz);
  EXPECT_EQ(dense.rows(), 200);
  EXPECT_EQ(dense.cols(), static_cast<Eigen::Index>(keys.size()));
  EXPECT_LE(keys.size(), 64u);
  for (Eigen::Index i = 0; i < dense.rows(); ++i) {
    EXPECT_EQ(dense.row(i).sum(), 1.0);
    Eigen::Index j;
    dense.row(i).maxCoeff(&j);
    EXPECT_EQ(keys[static_cast<std::size_t>(j)], frk::bau_key(recs[i].loc, 0.25));
  }
}

TEST(FrkBau, CoveringGrid) {
  const auto g = frk::BauGrid::covering({{0.05, 0.05}, {0.95, 0.45}}, 0.1);
  EXPECT_EQ(g.size(), 10u * 5u);
  for (const auto& c : g.centroids) EXPECT_EQ(frk::bau_key(c, 0.1), g.keys[&c - g.centroids.data()]);
}

TEST(FrkPrecision, MatchesGraphConstruction) {
  const auto b = frk::place_basis({{0, 0}, {2, 1}}, 2, 1, 1.25);
  const auto h = some_hyper(b);
  frk::FrkSpec spec;
  spec.fine_scale = false;
  const std::vector<SurveyRecord> none{{{0.5, 0.5}, 1, 0}};
  const geoprev::testutil::FrkGaussianOracle o(none, b, spec, h);
  EXPECT_LT((frk::coefficient_precision(b, h) - o.prior_prec).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(FrkLaplace, GaussianHookIsExact) {
  std::mt19937_64 rng(3);
  const auto recs = gaussian_records(rng, 150);
  for (bool fine : {true, false}) {
    frk::FrkSpec spec;
    spec.response = frk::Response::Gaussian;
    spec.gaussian_noise_var = 0.003;
    spec.bau_cell_size = 0.5;
    spec.fine_scale = fine;
    const auto basis = frk::place_basis(bounding_box(std::span<const SurveyRecord>(recs)), 2, 1, 1.25);
    const auto h = some_hyper(basis);
    frk::LaplaceState st;
    const double lm = frk::laplace_log_marginal(recs, basis, spec, h, &st);
    const geoprev::testutil::FrkGaussianOracle o(recs, basis, spec, h);
    const double want = o.log_marginal();
    EXPECT_NEAR(lm, want, 1e-6 * std::abs(want)) << "fine=" << fine;
    const Eigen::VectorXd mode = o.posterior_mode();
    Eigen::VectorXd got(mode.size());
    got << st.eta, st.xi;
    EXPECT_LT((got - mode).norm(), 1e-6 * std::max(1.0, mode.norm()));
  }
}

TEST(FrkFit, AllZeroData) {
  std::mt19937_64 rng(4);
  std::vector<SurveyRecord> recs;
  for (const auto& p : random_points(120, rng, 0.0, 2.0)) recs.push_back({p, 85, 0});
  frk::FrkSpec spec;
  spec.bau_cell_size = 0.2;
  const auto basis = frk_basis_for(recs, spec);
  const auto f = frk::fit(recs, basis, spec);
  EXPECT_LT(f.beta0(), logit(0.01));
  EXPECT_LT(f.laplace.eta.lpNorm<Eigen::Infinity>(), 1.0);
  const auto bau = frk::BauGrid::covering({{0, 0}, {2, 2}}, 0.2);
  for (const auto& p : frk::predict(f, basis, bau)) EXPECT_LT(p.mean, 0.01);
}

TEST(FrkFit, SingleBasisToyMatchesPooledMle) {
  // One basis function, one BAU, no fine-scale term: the fit reduces to a
  // binomial proportion.
  frk::BasisSet b;
  b.centres = {{0.55, 0.55}};
  b.apertures = {0.5};
  b.resolution = {1};
  b.layers = {frk::BasisSet::Layer{1, 1, 0, 0.4, 0.5}};
  b.nres = 1;
  const std::vector<SurveyRecord> recs{{{0.51, 0.52}, 40000, 9321}, {{0.58, 0.55}, 60000, 14012},
                                       {{0.53, 0.59}, 50000, 11807}};
  frk::FrkSpec spec;
  spec.fine_scale = false;
  spec.bau_cell_size = 1.0;
  const auto f = frk::fit(recs, b, spec);
  frk::PredictOptions opt;
  opt.zero_variance = true;
  const std::vector<Location> q{{0.55, 0.55}};
  const double fitted = logit(frk::predict_points(f, b, q, opt)[0].mean);
  const double pooled = logit((9321.0 + 14012 + 11807) / (40000.0 + 60000 + 50000));
  EXPECT_NEAR(fitted, pooled, 1e-3);
}

TEST(FrkFit, BeatsConstantOnSmoothSurface) {
  const BBox box{{0, 0}, {4, 4}};
  const auto truth = sim::two_bump_surface(box, 0.2);
  sim::SimConfig sc;
  sc.raster = truth;
  sc.locations = sim::Uniform{600};
  sc.seed = 5;
  const auto recs = sim::simulate(sc).records;
  frk::FrkSpec spec;
  spec.bau_cell_size = 0.2;
  const auto basis = frk_basis_for(recs, spec);
  const auto f = frk::fit(recs, basis, spec);
  const auto bau = frk::BauGrid::from_raster(truth, 0.2);
  const auto pred = frk::predict(f, basis, bau);
  double pooled = 0.0, tot = 0.0;
  for (const auto& r : recs) {
    pooled += r.positive;
    tot += r.examined;
  }
  pooled /= tot;
  const auto vals = truth.values();
  double se_frk = 0.0, se_const = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    se_frk += std::pow(pred[i].mean - vals[i], 2);
    se_const += std::pow(pooled - vals[i], 2);
  }
  EXPECT_LT(se_frk, se_const);
}

TEST(FrkPredict, ZeroVarianceHook) {
  std::mt19937_64 rng(6);
  std::vector<SurveyRecord> recs;
  std::uniform_int_distribution<long> pos(5, 40);
  for (const auto& p : random_points(80, rng, 0.0, 2.0)) recs.push_back({p, 85, pos(rng)});
  frk::FrkSpec spec;
  spec.bau_cell_size = 0.25;
  const auto basis = frk_basis_for(recs, spec);
  const auto f = frk::fit(recs, basis, spec);
  frk::PredictOptions opt;
  opt.zero_variance = true;
  const auto bau = frk::BauGrid::covering({{0, 0}, {2, 2}}, 0.25);
  const auto pred = frk::predict(f, basis, bau, opt);
  const Eigen::MatrixXd phi = frk::basis_eval(basis, bau.centroids);
  for (std::size_t c = 0; c < bau.size(); ++c) {
    double z = f.beta0() + phi.row(static_cast<Eigen::Index>(c)).dot(f.laplace.eta);
    if (auto it = f.data_index.find(bau.keys[c]); it != f.data_index.end()) z += f.laplace.xi[it->second];
    EXPECT_NEAR(pred[c].mean, inv_logit(z), 1e-14);
    EXPECT_EQ(pred[c].sd, 0.0);
  }
}

TEST(FrkPredict, MonteCarloStableAndDeterministic) {
  std::mt19937_64 rng(7);
  std::vector<SurveyRecord> recs;
  std::uniform_int_distribution<long> pos(5, 40);
  for (const auto& p : random_points(100, rng, 0.0, 2.0)) recs.push_back({p, 85, pos(rng)});
  frk::FrkSpec spec;
  spec.bau_cell_size = 0.2;
  const auto basis = frk_basis_for(recs, spec);
  const auto f = frk::fit(recs, basis, spec);
  const auto bau = frk::BauGrid::covering({{0, 0}, {2, 2}}, 0.2);
  frk::PredictOptions small, big;
  small.seed = 11;
  big.seed = 12;
  big.n_mc = 40000;
  const auto a = frk::predict(f, basis, bau, small), b = frk::predict(f, basis, bau, big);
  std::size_t ok = 0;
  for (std::size_t c = 0; c < bau.size(); ++c)
    if (std::abs(a[c].mean - b[c].mean) <= 3.0 * b[c].sd / std::sqrt(400.0)) ++ok;
  EXPECT_GE(static_cast<double>(ok), 0.95 * static_cast<double>(bau.size()));

  small.threads = 3;
  const auto c = frk::predict(f, basis, bau, small);
  small.threads = 1;
  const auto d = frk::predict(f, basis, bau, small);
  for (std::size_t i = 0; i < bau.size(); ++i) {
    EXPECT_EQ(a[i].mean, c[i].mean);
    EXPECT_EQ(a[i].mean, d[i].mean);
    EXPECT_EQ(a[i].sd, c[i].sd);
  }
}

TEST(FrkFit, CostGrowsWithBasisCount) {
  using Clock = std::chrono::steady_clock;
  std::mt19937_64 rng(8);
  std::vector<SurveyRecord> recs;
  std::uniform_int_distribution<long> pos(5, 40);
  for (const auto& p : random_points(300, rng, 0.0, 3.0)) recs.push_back({p, 85, pos(rng)});
  double prev = 0.0;
  std::size_t prev_r = 0;
  for (int nres : {1, 3}) {
    frk::FrkSpec spec;
    spec.nres = nres;
    spec.bau_cell_size = 0.1;
    const auto basis = frk_basis_for(recs, spec);
    const auto t0 = Clock::now();
    frk::fit(recs, basis, spec);
    const double t = std::chrono::duration<double>(Clock::now() - t0).count();
    RecordProperty("fit_seconds_nres" + std::to_string(nres), std::to_string(t));
    EXPECT_GT(basis.size(), prev_r);
    EXPECT_GE(t, prev);
    prev = t;
    prev_r = basis.size();
  }
}

TEST(FrkSpec, Validation) {
  frk::FrkSpec s;
  s.n_mc = 0;
  EXPECT_THROW(s.validate(), ValidationError);
  s = {};
  s.bau_cell_size = 0;
  EXPECT_THROW(s.validate(), ValidationError);
}
