#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include <json.hpp>

#include "geoprev_app/config.hpp"

namespace geoprev::app {

inline constexpr const char* kVersion = "0.1.0";

/// Command-line overrides applied on top of the config file.
struct Overrides {
  std::optional<std::filesystem::path> out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  bool early_stop = false;  // gp: stop boosting once the NLL stalls
};

/// Reads the config, applies overrides and validates it.
RunConfig load_config(const std::filesystem::path& path, Command command, const Overrides& ov);

/// Executes one command, writing its artifacts under cfg.out_dir and
/// appending a line to provenance.jsonl.
void run(const RunConfig& cfg, std::ostream& log);

/// Full command: load, run and report. Returns the process exit status:
/// 0 success, 2 invalid config, 1 any other failure.
int run_command(Command command, const std::filesystem::path& config, const Overrides& ov,
                std::ostream& log, std::ostream& err);

}  // namespace geoprev::app
