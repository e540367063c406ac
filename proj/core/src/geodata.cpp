#include "geoprev/geodata.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <numbers>
#include <ostream>
#include <sstream>

#include "geoprev/errors.hpp"

namespace geoprev {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  if (s.empty()) return false;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

std::string format_double(double v) {
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  return in;
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

}  // namespace

BBox bounding_box(std::span<const Location> pts) {
  if (pts.empty()) throw ValidationError("bounding box of an empty point set");
  BBox b{pts.front(), pts.front()};
  for (const auto& p : pts) {
    b.lo.lon = std::min(b.lo.lon, p.lon);
    b.lo.lat = std::min(b.lo.lat, p.lat);
    b.hi.lon = std::max(b.hi.lon, p.lon);
    b.hi.lat = std::max(b.hi.lat, p.lat);
  }
  return b;
}

BBox bounding_box(std::span<const SurveyRecord> records) {
  const auto pts = locations_of(records);
  return bounding_box(pts);
}

double distance(const Location& a, const Location& b, DistanceMetric m) {
  if (m == DistanceMetric::Euclidean) {
    return std::hypot(a.lon - b.lon, a.lat - b.lat);
  }
  constexpr double deg = std::numbers::pi / 180.0;
  const double phi1 = a.lat * deg;
  const double phi2 = b.lat * deg;
  const double s_lat = std::sin(0.5 * (phi2 - phi1));
  const double s_lon = std::sin(0.5 * (b.lon - a.lon) * deg);
  const double h = s_lat * s_lat + std::cos(phi1) * std::cos(phi2) * s_lon * s_lon;
  return 2.0 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(h)));
}

Eigen::MatrixXd distance_matrix(std::span<const Location> pts, DistanceMetric m) {
  const auto n = static_cast<Eigen::Index>(pts.size());
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = j + 1; i < n; ++i) {
      const double v = distance(pts[i], pts[j], m);
      d(i, j) = v;
      d(j, i) = v;
    }
  }
  return d;
}

Eigen::MatrixXd cross_distances(std::span<const Location> queries,
                                std::span<const Location> anchors, DistanceMetric m) {
  Eigen::MatrixXd d(static_cast<Eigen::Index>(queries.size()),
                    static_cast<Eigen::Index>(anchors.size()));
  for (std::size_t j = 0; j < anchors.size(); ++j) {
    for (std::size_t i = 0; i < queries.size(); ++i) {
      d(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          distance(queries[i], anchors[j], m);
    }
  }
  return d;
}

std::vector<Location> locations_of(std::span<const SurveyRecord> records) {
  std::vector<Location> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(r.loc);
  return out;
}

Eigen::VectorXd prevalences_of(std::span<const SurveyRecord> records) {
  Eigen::VectorXd y(static_cast<Eigen::Index>(records.size()));
  for (std::size_t i = 0; i < records.size(); ++i) y[static_cast<Eigen::Index>(i)] = records[i].prevalence();
  return y;
}

// ---------------------------------------------------------------------------
// Raster

Raster::Raster(Location origin, double cell_size, std::size_t n_rows, std::size_t n_cols,
               double fill)
    : origin_(origin),
      cell_size_(cell_size),
      n_rows_(n_rows),
      n_cols_(n_cols),
      values_(n_rows * n_cols, fill),
      nodata_(n_rows * n_cols, false) {
  if (!(cell_size > 0.0) || !std::isfinite(cell_size)) {
    throw ValidationError("raster cell size must be positive");
  }
  if (n_rows == 0 || n_cols == 0) throw ValidationError("raster must have at least one cell");
}

BBox Raster::bbox() const {
  return {origin_,
          {origin_.lon + cell_size_ * static_cast<double>(n_cols_),
           origin_.lat + cell_size_ * static_cast<double>(n_rows_)}};
}

std::size_t Raster::valid_count() const {
  return static_cast<std::size_t>(std::count(nodata_.begin(), nodata_.end(), false));
}

Location Raster::cell_centre(std::size_t row, std::size_t col) const {
  const double x = origin_.lon + (static_cast<double>(col) + 0.5) * cell_size_;
  const double y = origin_.lat + (static_cast<double>(n_rows_ - 1 - row) + 0.5) * cell_size_;
  return {x, y};
}

std::optional<CellIndex> Raster::cell_of(const Location& loc) const {
  if (!bbox().contains(loc)) return std::nullopt;
  const double fx = (loc.lon - origin_.lon) / cell_size_;
  const double fy = (loc.lat - origin_.lat) / cell_size_;
  auto col = static_cast<std::size_t>(std::max(0.0, std::floor(fx)));
  auto row_from_bottom = static_cast<std::size_t>(std::max(0.0, std::floor(fy)));
  col = std::min(col, n_cols_ - 1);
  row_from_bottom = std::min(row_from_bottom, n_rows_ - 1);
  return CellIndex{n_rows_ - 1 - row_from_bottom, col};
}

std::vector<Location> Raster::valid_centres() const {
  std::vector<Location> out;
  out.reserve(valid_count());
  for (std::size_t r = 0; r < n_rows_; ++r)
    for (std::size_t c = 0; c < n_cols_; ++c)
      if (!is_nodata(r, c)) out.push_back(cell_centre(r, c));
  return out;
}

std::vector<CellIndex> Raster::valid_cells() const {
  std::vector<CellIndex> out;
  out.reserve(valid_count());
  for (std::size_t r = 0; r < n_rows_; ++r)
    for (std::size_t c = 0; c < n_cols_; ++c)
      if (!is_nodata(r, c)) out.push_back({r, c});
  return out;
}

std::optional<double> raster_sample(const Raster& r, const Location& loc) {
  const auto cell = r.cell_of(loc);
  if (!cell) {
    std::ostringstream msg;
    msg << "location (" << loc.lon << ", " << loc.lat << ") outside raster extent";
    throw BoundsError(msg.str());
  }
  if (r.is_nodata(cell->row, cell->col)) return std::nullopt;
  return r.at(cell->row, cell->col);
}

Raster build_grid(const BBox& bbox, double cell_size) {
  if (!(cell_size > 0.0)) throw ValidationError("grid cell size must be positive");
  const double w = bbox.width();
  const double h = bbox.height();
  if (!(w > 0.0) || !(h > 0.0)) throw ValidationError("degenerate bounding box for grid");
  // Guard against 8/0.1 = 80.00000000000001 style round-off.
  auto count = [cell_size](double extent) {
    return static_cast<std::size_t>(std::ceil(extent / cell_size - 1e-9));
  };
  return Raster(bbox.lo, cell_size, std::max<std::size_t>(1, count(h)),
                std::max<std::size_t>(1, count(w)));
}

// ---------------------------------------------------------------------------
// Survey CSV

std::vector<SurveyRecord> parse_survey_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("survey CSV is empty (missing header)", 0);
  {
    std::string header;
    for (char ch : trim(line))
      if (ch != ' ') header.push_back(ch);
    if (header.size() >= 3 && header.compare(0, 3, "\xEF\xBB\xBF") == 0) header.erase(0, 3);
    if (header != "lon,lat,examined,positive") {
      throw ParseError("survey CSV header must be `lon,lat,examined,positive`, got `" + header + "`", 0);
    }
  }
  std::vector<SurveyRecord> out;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    std::array<std::string_view, 4> fields;
    std::string_view rest(line);
    for (std::size_t f = 0; f < 4; ++f) {
      const auto comma = rest.find(',');
      if (f < 3 && comma == std::string_view::npos) {
        throw ParseError("row " + std::to_string(row) + ": expected 4 fields", row);
      }
      fields[f] = f < 3 ? rest.substr(0, comma) : rest;
      if (f < 3) rest.remove_prefix(comma + 1);
    }
    if (fields[3].find(',') != std::string_view::npos) {
      throw ParseError("row " + std::to_string(row) + ": expected 4 fields", row);
    }
    SurveyRecord rec;
    if (!parse_number(fields[0], rec.loc.lon) || !parse_number(fields[1], rec.loc.lat) ||
        !parse_number(fields[2], rec.examined) || !parse_number(fields[3], rec.positive)) {
      throw ParseError("row " + std::to_string(row) + ": malformed number", row);
    }
    if (rec.loc.lon < -180.0 || rec.loc.lon > 180.0 || rec.loc.lat < -90.0 || rec.loc.lat > 90.0) {
      throw ValidationError("row " + std::to_string(row) + ": coordinates out of range", row);
    }
    if (rec.examined < 1) {
      throw ValidationError("row " + std::to_string(row) + ": examined must be >= 1", row);
    }
    if (rec.positive < 0 || rec.positive > rec.examined) {
      throw ValidationError("row " + std::to_string(row) + ": positive must lie in [0, examined]", row);
    }
    out.push_back(rec);
  }
  return out;
}

std::vector<SurveyRecord> parse_survey_csv(const std::filesystem::path& path) {
  auto in = open_input(path);
  return parse_survey_csv(in);
}

void write_survey_csv(std::ostream& out, std::span<const SurveyRecord> records) {
  out << "lon,lat,examined,positive\n";
  for (const auto& r : records) {
    out << format_double(r.loc.lon) << ',' << format_double(r.loc.lat) << ',' << r.examined << ','
        << r.positive << '\n';
  }
}

void write_survey_csv(const std::filesystem::path& path, std::span<const SurveyRecord> records) {
  auto out = open_output(path);
  write_survey_csv(out, records);
}

// ---------------------------------------------------------------------------
// ESRI ASCII grid

Raster read_esri_ascii(std::istream& in) {
  std::map<std::string, std::string> header;
  std::string key;
  // Header keys are case-insensitive; the first numeric token ends the header.
  while (in >> key) {
    double probe = 0.0;
    if (parse_number(key, probe)) break;
    std::string value;
    if (!(in >> value)) throw ParseError("truncated ESRI grid header");
    std::transform(key.begin(), key.end(), key.begin(), [](unsigned char c) { return std::tolower(c); });
    header[key] = value;
  }
  auto need = [&](const std::string& k) -> double {
    auto it = header.find(k);
    double v = 0.0;
    if (it == header.end() || !parse_number(it->second, v)) {
      throw ParseError("ESRI grid header missing or malformed `" + k + "`");
    }
    return v;
  };
  const auto ncols = static_cast<std::size_t>(need("ncols"));
  const auto nrows = static_cast<std::size_t>(need("nrows"));
  const double cell = need("cellsize");
  double x0 = 0.0, y0 = 0.0;
  if (header.contains("xllcorner")) {
    x0 = need("xllcorner");
    y0 = need("yllcorner");
  } else {
    x0 = need("xllcenter") - 0.5 * cell;
    y0 = need("yllcenter") - 0.5 * cell;
  }
  std::optional<double> nodata;
  if (header.contains("nodata_value")) nodata = need("nodata_value");

  Raster r({x0, y0}, cell, nrows, ncols);
  // `key` holds the first value token.
  std::size_t idx = 0;
  std::string token = key;
  const std::size_t total = nrows * ncols;
  while (idx < total) {
    if (idx > 0 && !(in >> token)) break;
    double v = 0.0;
    if (!parse_number(token, v)) {
      throw ParseError("ESRI grid: malformed value at cell " + std::to_string(idx), idx / ncols + 1);
    }
    const std::size_t row = idx / ncols;
    const std::size_t col = idx % ncols;
    r.at(row, col) = v;
    if (nodata && v == *nodata) r.set_nodata(row, col);
    ++idx;
  }
  if (idx != total) {
    throw ParseError("ESRI grid: expected " + std::to_string(total) + " values, read " +
                     std::to_string(idx));
  }
  return r;
}

Raster read_esri_ascii(const std::filesystem::path& path) {
  auto in = open_input(path);
  return read_esri_ascii(in);
}

void write_esri_ascii(std::ostream& out, const Raster& r, double nodata_value) {
  out << "ncols " << r.n_cols() << '\n'
      << "nrows " << r.n_rows() << '\n'
      << "xllcorner " << format_double(r.origin().lon) << '\n'
      << "yllcorner " << format_double(r.origin().lat) << '\n'
      << "cellsize " << format_double(r.cell_size()) << '\n'
      << "NODATA_value " << format_double(nodata_value) << '\n';
  for (std::size_t row = 0; row < r.n_rows(); ++row) {
    for (std::size_t col = 0; col < r.n_cols(); ++col) {
      if (col) out << ' ';
      out << format_double(r.is_nodata(row, col) ? nodata_value : r.at(row, col));
    }
    out << '\n';
  }
}

void write_esri_ascii(const std::filesystem::path& path, const Raster& r, double nodata_value) {
  auto out = open_output(path);
  write_esri_ascii(out, r, nodata_value);
}

}  // namespace geoprev
