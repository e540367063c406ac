#include <random>

#include <benchmark/benchmark.h>

#include "geoprev/covfn.hpp"
#include "geoprev/evalkit.hpp"
#include "geoprev/frk.hpp"
#include "geoprev/gpcore.hpp"
#include "geoprev/lgm.hpp"
#include "geoprev/model.hpp"
#include "geoprev/simkit.hpp"
#include "geoprev/sprf.hpp"

using namespace geoprev;

namespace {

std::vector<SurveyRecord> survey(std::size_t n) {
  sim::SimConfig c;
  c.raster = sim::two_bump_surface({{0, 0}, {10, 10}}, 0.1);
  c.locations = sim::Uniform{n};
  c.seed = 1;
  return sim::simulate(c).records;
}

}  // namespace

static void BM_CovMatrix(benchmark::State& state) {
  const auto recs = survey(static_cast<std::size_t>(state.range(0)));
  const auto pts = locations_of(recs);
  const auto spec = CovarianceSpec::exponential(1.0, 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(cov_matrix(pts, spec, 1e-8));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_CovMatrix)->RangeMultiplier(2)->Range(250, 2000)->Complexity();

static void BM_GpNllExact(benchmark::State& state) {
  const auto recs = survey(static_cast<std::size_t>(state.range(0)));
  const auto pts = locations_of(recs);
  const Eigen::VectorXd y = prevalences_of(recs);
  const Eigen::VectorXd f = Eigen::VectorXd::Constant(y.size(), y.mean());
  const gp::Theta t{0.02, 1.0, 0.005};
  for (auto _ : state) benchmark::DoNotOptimize(gp::gp_nll(y, f, t, pts, CovarianceSpec::exponential(1, 1)));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_GpNllExact)->RangeMultiplier(2)->Range(250, 2000)->Complexity(benchmark::oNCubed);

static void BM_GpNllVecchia(benchmark::State& state) {
  const auto recs = survey(static_cast<std::size_t>(state.range(0)));
  const auto pts = locations_of(recs);
  const Eigen::VectorXd y = prevalences_of(recs);
  const Eigen::VectorXd f = Eigen::VectorXd::Constant(y.size(), y.mean());
  const gp::Theta t{0.02, 1.0, 0.005};
  const auto nb = gp::vecchia_neighbours(pts, 30, DistanceMetric::Euclidean);
  for (auto _ : state) benchmark::DoNotOptimize(gp::gp_nll_vecchia(y, f, t, pts, CovarianceSpec::exponential(1, 1), nb));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_GpNllVecchia)->RangeMultiplier(2)->Range(250, 4000)->Complexity(benchmark::oN);

static void BM_SprfFit(benchmark::State& state) {
  const auto recs = survey(static_cast<std::size_t>(state.range(0)));
  sprf::SprfSpec spec;
  spec.num_trees = 100;
  spec.metric = DistanceMetric::Euclidean;
  for (auto _ : state) benchmark::DoNotOptimize(sprf::fit(recs, spec));
}
BENCHMARK(BM_SprfFit)->Arg(250)->Arg(500)->Arg(1000)->Unit(benchmark::kMillisecond);

static void BM_FrkLaplace(benchmark::State& state) {
  const auto recs = survey(static_cast<std::size_t>(state.range(0)));
  frk::FrkSpec spec;
  const auto basis = frk_basis_for(recs, spec);
  frk::Hyper h;
  h.beta0 = -1.0;
  h.tau.assign(basis.layers.size(), 1.0);
  h.rho.assign(basis.layers.size(), 0.5);
  for (auto _ : state) benchmark::DoNotOptimize(frk::laplace_log_marginal(recs, basis, spec, h));
}
BENCHMARK(BM_FrkLaplace)->Arg(500)->Arg(1000)->Arg(2000)->Unit(benchmark::kMillisecond);

static void BM_LgmLaplace(benchmark::State& state) {
  const auto recs = survey(static_cast<std::size_t>(state.range(0)));
  lgm::LgmSpec spec;
  const auto lattice = lgm::Lattice::covering(bounding_box(std::span<const SurveyRecord>(recs)), spec.lattice_cell,
                                              spec.margin);
  const lgm::Theta t{2.0, 0.1, 0.0};
  for (auto _ : state) benchmark::DoNotOptimize(lgm::laplace_log_marginal(recs, lattice, spec, t));
}
BENCHMARK(BM_LgmLaplace)->Arg(500)->Arg(1000)->Arg(2000)->Unit(benchmark::kMillisecond);

static void BM_KMeans(benchmark::State& state) {
  const auto pts = locations_of(survey(static_cast<std::size_t>(state.range(0))));
  for (auto _ : state) benchmark::DoNotOptimize(eval::kmeans_folds(pts, 10, 3));
}
BENCHMARK(BM_KMeans)->Arg(500)->Arg(2000)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
