#include "geoprev/simkit.hpp"

#include <cmath>
#include <random>

#include "geoprev/errors.hpp"
#include "geoprev/link.hpp"

namespace geoprev::sim {

namespace {

std::mt19937_64 stream(std::uint64_t seed, std::uint64_t index, std::uint32_t tag) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32), tag};
  return std::mt19937_64(seq);
}

constexpr std::uint32_t kLocationTag = 0x4c4f43u;
constexpr std::uint32_t kSiteTag = 0x534954u;

}  // namespace

void SimConfig::validate() const {
  if (const auto* u = std::get_if<Uniform>(&locations); u && u->count < 1)
    throw ValidationError("simulate: uniform location count must be >= 1");
  if (!(noise_sd >= 0.0) || !std::isfinite(noise_sd)) throw ValidationError("simulate: noise_sd must be >= 0");
  if (tests_per_site.empty()) throw ValidationError("simulate: tests_per_site is empty");
  for (long n : tests_per_site)
    if (n < 1) throw ValidationError("simulate: tests_per_site entries must be >= 1");
  if (const auto* a = std::get_if<AtPoints>(&locations);
      a && tests_per_site.size() != 1 && tests_per_site.size() != a->points.size())
    throw ValidationError("simulate: tests_per_site must have one entry or one per site");
}

std::vector<Location> sample_uniform_locations(const Raster& r, std::size_t count, std::uint64_t seed) {
  if (count < 1) throw ValidationError("sample_uniform_locations: count must be >= 1");
  const auto cells = r.valid_cells();
  if (cells.empty()) throw ValidationError("sample_uniform_locations: raster has no valid cells");
  auto rng = stream(seed, 0, kLocationTag);
  std::uniform_int_distribution<std::size_t> pick(0, cells.size() - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Location> out;
  out.reserve(count);
  const double h = r.cell_size();
  for (std::size_t i = 0; i < count; ++i) {
    const auto c = cells[pick(rng)];
    const Location centre = r.cell_centre(c.row, c.col);
    out.push_back({centre.lon + (unit(rng) - 0.5) * h, centre.lat + (unit(rng) - 0.5) * h});
  }
  return out;
}

SimResult simulate(const SimConfig& cfg) {
  cfg.validate();
  std::vector<Location> sites;
  if (const auto* a = std::get_if<AtPoints>(&cfg.locations)) {
    sites = a->points;
  } else {
    sites = sample_uniform_locations(cfg.raster, std::get<Uniform>(cfg.locations).count, cfg.seed);
  }
  SimResult out;
  out.records.reserve(sites.size());
  for (std::size_t i = 0; i < sites.size(); ++i) {
    const auto& loc = sites[i];
    if (!cfg.raster.bbox().contains(loc)) {
      out.dropped.push_back({i, loc, "outside raster"});
      continue;
    }
    const auto value = raster_sample(cfg.raster, loc);
    if (!value) {
      out.dropped.push_back({i, loc, "nodata cell"});
      continue;
    }
    double p = *value;
    if (!(p >= 0.0 && p <= 1.0))
      throw ValidationError("simulate: raster value outside [0, 1] at site " + std::to_string(i));
    auto rng = stream(cfg.seed, i, kSiteTag);
    if (cfg.noise_sd > 0.0) {
      std::normal_distribution<double> noise(0.0, cfg.noise_sd);
      p = inv_logit(logit(p) + noise(rng));
    }
    const long n = cfg.tests_per_site.size() == 1 ? cfg.tests_per_site.front() : cfg.tests_per_site[i];
    std::binomial_distribution<long> draw(n, p);
    out.records.push_back({loc, n, draw(rng)});
  }
  return out;
}

Raster two_bump_surface(const BBox& bbox, double cell_size) {
  Raster r = build_grid(bbox, cell_size);
  const double w = bbox.width(), h = bbox.height();
  const Location c1{bbox.lo.lon + 0.3 * w, bbox.lo.lat + 0.35 * h};
  const Location c2{bbox.lo.lon + 0.7 * w, bbox.lo.lat + 0.65 * h};
  const double s = 0.18 * std::min(w, h);
  for (std::size_t row = 0; row < r.n_rows(); ++row) {
    for (std::size_t col = 0; col < r.n_cols(); ++col) {
      const Location x = r.cell_centre(row, col);
      auto bump = [&](const Location& c) {
        const double dx = x.lon - c.lon, dy = x.lat - c.lat;
        return std::exp(-(dx * dx + dy * dy) / (2.0 * s * s));
      };
      r.at(row, col) = inv_logit(-2.0 + 2.6 * bump(c1) + 2.0 * bump(c2));
    }
  }
  return r;
}

}  // namespace geoprev::sim
