#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "geoprev/geodata.hpp"

namespace geoprev::testutil {

inline std::vector<Location> random_points(std::size_t n, std::mt19937_64& rng, double lo = 0.0,
                                           double hi = 10.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<Location> pts(n);
  for (auto& p : pts) p = {u(rng), u(rng)};
  return pts;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("geoprev_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::FILE* f = std::fopen(p.string().c_str(), "rb");
  if (!f) return {};
  std::string s;
  char buf[4096];
  std::size_t k;
  while ((k = std::fread(buf, 1, sizeof buf, f)) > 0) s.append(buf, k);
  std::fclose(f);
  return s;
}

}  // namespace geoprev::testutil
