#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "geoprev/geodata.hpp"
#include "geoprev/model.hpp"

namespace geoprev::app {

enum class Command { Fit, Predict, Simulate, Cv, Bench };

std::string to_string(Command c);
Command command_from_string(const std::string& s);

/// All problems found while validating a config, one message per field.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<std::string> problems);
  const std::vector<std::string>& problems() const { return problems_; }

 private:
  std::vector<std::string> problems_;
};

struct GridSpec {
  std::optional<std::filesystem::path> raster;  // template: predict at its valid cells
  std::optional<BBox> bbox;                     // otherwise the survey bounding box
  double cell_size = 0.1;
};

struct SimulateSpec {
  std::optional<std::filesystem::path> raster;  // unset: two-bump surface over `bbox`
  BBox bbox{{0.0, 0.0}, {10.0, 10.0}};
  double cell_size = 0.1;
  std::optional<std::size_t> count;
  std::optional<std::filesystem::path> points;  // survey-format CSV whose sites are reused
  std::vector<long> tests_per_site{85};
  double noise_sd = 0.0;
};

struct CvSpec {
  int k = 10;
};

struct BenchSpec {
  std::vector<ModelKind> models{ModelKind::Gp, ModelKind::Sprf, ModelKind::Frk, ModelKind::Lgm};
  std::vector<std::size_t> sizes{500, 1000, 2000};
  std::size_t gp_exact_cap = 4000;
  int gp_rounds = 10;     // boosting rounds for the gp runs
  SimulateSpec data;      // surface and per-site tests; `count` is taken from `sizes`
  double grid_cell = 0.1;  // prediction grid over the surface bounding box
};

struct RunConfig {
  Command command = Command::Fit;
  std::uint64_t seed = 1;
  unsigned threads = 1;
  bool early_stop = false;  // forces gp.early_stop
  std::filesystem::path out_dir = ".";
  std::optional<std::filesystem::path> survey;  // input survey CSV
  std::optional<std::filesystem::path> model;   // input model file (predict)
  std::optional<ModelConfig> model_config;      // from the single model block
  GridSpec grid;
  SimulateSpec simulate;
  CvSpec cv;
  BenchSpec bench;
  nlohmann::json source;  // the config as read, after command-line overrides
};

/// Validates `j` for `command`. Relative paths resolve against `base_dir`.
/// Throws ConfigError listing every problem.
RunConfig parse_config(const nlohmann::json& j, Command command, const std::filesystem::path& base_dir);

/// Model block parsers, shared with model-file loading.
ModelConfig model_config_from_json(ModelKind kind, const nlohmann::json& block,
                                   std::vector<std::string>& problems);
nlohmann::json model_config_to_json(const ModelConfig& cfg);

/// FNV-1a of the canonical JSON dump.
std::string config_hash(const nlohmann::json& j);

}  // namespace geoprev::app
