#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "geoprev/model.hpp"
#include "geoprev_app/config.hpp"

namespace geoprev::app {

/// Resident set size of this process in bytes, from /proc/self/status.
/// Returns 0 where that file is unavailable.
std::uint64_t current_rss_bytes();

/// Samples the resident set size every `period_ms` on a background thread and
/// keeps the maximum seen since start().
class RssSampler {
 public:
  explicit RssSampler(int period_ms = 50) : period_ms_(period_ms) {}
  ~RssSampler() { stop(); }
  RssSampler(const RssSampler&) = delete;
  RssSampler& operator=(const RssSampler&) = delete;

  void start();
  std::uint64_t stop();  // returns the peak
  std::uint64_t peak() const { return peak_.load(); }

 private:
  int period_ms_;
  std::atomic<bool> running_{false};
  std::atomic<std::uint64_t> peak_{0};
  std::thread worker_;
};

struct BenchRun {
  ModelKind model = ModelKind::Gp;
  std::size_t n_records = 0;
  std::string status = "ok";  // ok | skipped | failed
  std::string message;
  double wall_time_s = 0.0;
  double fit_time_s = 0.0;
  double predict_time_s = 0.0;
  std::uint64_t peak_rss_bytes = 0;
};

struct BenchReport {
  std::vector<BenchRun> runs;
  std::uint64_t seed = 0;
  std::size_t grid_cells = 0;
};

nlohmann::json to_json(const BenchReport& r);

/// For each (model, n): simulate n uniform sites on the surface, fit and
/// predict over the grid single-threaded. GP runs above `gp_exact_cap` are
/// marked skipped and failures are recorded without stopping the sweep.
BenchReport bench_scaling(const BenchSpec& spec, std::uint64_t seed);

/// Least-squares slope of log(time) against log(n) over the successful runs
/// of `model`; unset with fewer than two runs.
std::optional<double> loglog_slope(const BenchReport& r, ModelKind model,
                                   const std::function<double(const BenchRun&)>& time);

/// Model settings used by the sweep.
ModelConfig bench_model_config(ModelKind kind, const BenchSpec& spec);

}  // namespace geoprev::app
