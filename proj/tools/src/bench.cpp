#include "geoprev_app/bench.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include "geoprev/simkit.hpp"

namespace geoprev::app {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

std::uint64_t current_rss_bytes() {
  std::ifstream in("/proc/self/status");
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("VmRSS:", 0) == 0) {
      std::istringstream s(line.substr(6));
      std::uint64_t kb = 0;
      s >> kb;
      return kb * 1024;
    }
  }
  return 0;
}

void RssSampler::start() {
  stop();
  peak_ = current_rss_bytes();
  running_ = true;
  worker_ = std::thread([this] {
    while (running_.load()) {
      const auto v = current_rss_bytes();
      auto p = peak_.load();
      while (v > p && !peak_.compare_exchange_weak(p, v)) {
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(period_ms_));
    }
  });
}

std::uint64_t RssSampler::stop() {
  if (worker_.joinable()) {
    running_ = false;
    worker_.join();
    const auto v = current_rss_bytes();
    if (v > peak_) peak_ = v;
  }
  return peak_;
}

json to_json(const BenchReport& r) {
  json runs = json::array();
  for (const auto& b : r.runs) {
    json j = {{"model", to_string(b.model)}, {"n_records", b.n_records}, {"status", b.status}};
    if (!b.message.empty()) j["message"] = b.message;
    if (b.status == "ok") {
      j["wall_time_s"] = b.wall_time_s;
      j["fit_time_s"] = b.fit_time_s;
      j["predict_time_s"] = b.predict_time_s;
      j["peak_rss_bytes"] = b.peak_rss_bytes;
    }
    runs.push_back(std::move(j));
  }
  return {{"seed", r.seed}, {"grid_cells", r.grid_cells}, {"runs", runs}};
}

ModelConfig bench_model_config(ModelKind kind, const BenchSpec& spec) {
  ModelConfig cfg;
  cfg.kind = kind;
  cfg.gp.boosting.rounds = spec.gp_rounds;
  cfg.sprf.metric = DistanceMetric::Euclidean;
  cfg.sprf.threads = 1;
  cfg.frk.threads = 1;
  cfg.lgm.threads = 1;
  return cfg;
}

BenchReport bench_scaling(const BenchSpec& spec, std::uint64_t seed) {
  const Raster surface = spec.data.raster ? read_esri_ascii(*spec.data.raster)
                                          : sim::two_bump_surface(spec.data.bbox, spec.data.cell_size);
  const std::vector<Location> grid = build_grid(surface.bbox(), spec.grid_cell).valid_centres();

  BenchReport report;
  report.seed = seed;
  report.grid_cells = grid.size();
  RssSampler sampler;
  for (std::size_t n : spec.sizes) {
    sim::SimConfig sc;
    sc.raster = surface;
    sc.locations = sim::Uniform{n};
    sc.tests_per_site = spec.data.tests_per_site;
    sc.noise_sd = spec.data.noise_sd;
    sc.seed = seed + n;
    const auto data = sim::simulate(sc).records;
    for (ModelKind kind : spec.models) {
      BenchRun run;
      run.model = kind;
      run.n_records = n;
      if (kind == ModelKind::Gp && n > spec.gp_exact_cap) {
        run.status = "skipped";
        run.message = "n above gp_exact_cap";
        report.runs.push_back(run);
        continue;
      }
      try {
        const auto cfg = bench_model_config(kind, spec);
        sampler.start();
        const auto t0 = Clock::now();
        auto model = fit_model(cfg, data);
        const auto t1 = Clock::now();
        const auto pred = model->predict(grid);
        const auto t2 = Clock::now();
        run.peak_rss_bytes = sampler.stop();
        run.fit_time_s = std::chrono::duration<double>(t1 - t0).count();
        run.predict_time_s = std::chrono::duration<double>(t2 - t1).count();
        run.wall_time_s = std::chrono::duration<double>(Clock::now() - t0).count();
      } catch (const std::exception& e) {
        sampler.stop();
        run.status = "failed";
        run.message = e.what();
      }
      report.runs.push_back(run);
    }
  }
  return report;
}

std::optional<double> loglog_slope(const BenchReport& r, ModelKind model,
                                   const std::function<double(const BenchRun&)>& time) {
  std::vector<double> x, y;
  for (const auto& b : r.runs) {
    if (b.model != model || b.status != "ok") continue;
    const double t = time(b);
    if (!(t > 0.0)) continue;
    x.push_back(std::log(static_cast<double>(b.n_records)));
    y.push_back(std::log(t));
  }
  if (x.size() < 2) return std::nullopt;
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i] / n;
    my += y[i] / n;
  }
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  if (!(sxx > 0.0)) return std::nullopt;
  return sxy / sxx;
}

}  // namespace geoprev::app
