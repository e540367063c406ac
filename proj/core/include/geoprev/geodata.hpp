#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace geoprev {

/// Longitude/latitude pair in degrees.
struct Location {
  double lon = 0.0;
  double lat = 0.0;

  friend bool operator==(const Location&, const Location&) = default;
};

/// One prevalence survey: `positive` of `examined` individuals tested positive.
struct SurveyRecord {
  Location loc;
  long examined = 1;
  long positive = 0;

  double prevalence() const { return static_cast<double>(positive) / static_cast<double>(examined); }

  friend bool operator==(const SurveyRecord&, const SurveyRecord&) = default;
};

/// Axis-aligned lon/lat box, `lo` is the south-west corner.
struct BBox {
  Location lo;
  Location hi;

  double width() const { return hi.lon - lo.lon; }
  double height() const { return hi.lat - lo.lat; }
  bool contains(const Location& p) const {
    return p.lon >= lo.lon && p.lon <= hi.lon && p.lat >= lo.lat && p.lat <= hi.lat;
  }
  BBox expanded(double margin) const {
    return {{lo.lon - margin, lo.lat - margin}, {hi.lon + margin, hi.lat + margin}};
  }
};

/// Smallest box containing all points. Throws ValidationError on empty input.
BBox bounding_box(std::span<const Location> pts);
BBox bounding_box(std::span<const SurveyRecord> records);

enum class DistanceMetric {
  Euclidean,    ///< planar distance in degrees
  GreatCircle,  ///< haversine distance in km on a sphere of radius 6371 km
};

inline constexpr double kEarthRadiusKm = 6371.0;

double distance(const Location& a, const Location& b, DistanceMetric m);

/// Symmetric matrix of pairwise distances with an exactly zero diagonal.
Eigen::MatrixXd distance_matrix(std::span<const Location> pts, DistanceMetric m);

/// Rows are `queries`, columns are `anchors`.
Eigen::MatrixXd cross_distances(std::span<const Location> queries,
                                std::span<const Location> anchors, DistanceMetric m);

std::vector<Location> locations_of(std::span<const SurveyRecord> records);
Eigen::VectorXd prevalences_of(std::span<const SurveyRecord> records);

/// Row/column address of a raster cell. Row 0 is the northernmost row, which
/// is the order ESRI ASCII grids store their rows in.
struct CellIndex {
  std::size_t row = 0;
  std::size_t col = 0;
};

/// Regular lon/lat lattice of values. `origin` is the lower-left corner of the
/// lower-left cell; values are row-major starting from the top row.
class Raster {
 public:
  Raster() = default;
  Raster(Location origin, double cell_size, std::size_t n_rows, std::size_t n_cols,
         double fill = 0.0);

  const Location& origin() const { return origin_; }
  double cell_size() const { return cell_size_; }
  std::size_t n_rows() const { return n_rows_; }
  std::size_t n_cols() const { return n_cols_; }
  std::size_t size() const { return values_.size(); }
  BBox bbox() const;

  double& at(std::size_t row, std::size_t col) { return values_[row * n_cols_ + col]; }
  double at(std::size_t row, std::size_t col) const { return values_[row * n_cols_ + col]; }
  bool is_nodata(std::size_t row, std::size_t col) const { return nodata_[row * n_cols_ + col]; }
  void set_nodata(std::size_t row, std::size_t col, bool flag = true) {
    nodata_[row * n_cols_ + col] = flag;
  }

  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }
  const std::vector<bool>& nodata_mask() const { return nodata_; }
  std::size_t valid_count() const;

  Location cell_centre(std::size_t row, std::size_t col) const;
  /// Cell whose half-open extent [x, x + cell) contains `loc`; points on the
  /// north or east border of the raster belong to the last row/column.
  std::optional<CellIndex> cell_of(const Location& loc) const;

  /// Centres of all cells that are not nodata, in row-major order.
  std::vector<Location> valid_centres() const;
  std::vector<CellIndex> valid_cells() const;

 private:
  Location origin_;
  double cell_size_ = 1.0;
  std::size_t n_rows_ = 0;
  std::size_t n_cols_ = 0;
  std::vector<double> values_;
  std::vector<bool> nodata_;
};

/// Value of the cell containing `loc`; `std::nullopt` on a nodata cell.
/// Throws BoundsError when `loc` lies outside the raster.
std::optional<double> raster_sample(const Raster& r, const Location& loc);

/// Empty all-valid raster covering `bbox` with ceil(extent / cell_size) cells
/// per axis.
Raster build_grid(const BBox& bbox, double cell_size);

// Survey CSV: header `lon,lat,examined,positive`.
std::vector<SurveyRecord> parse_survey_csv(std::istream& in);
std::vector<SurveyRecord> parse_survey_csv(const std::filesystem::path& path);
void write_survey_csv(std::ostream& out, std::span<const SurveyRecord> records);
void write_survey_csv(const std::filesystem::path& path, std::span<const SurveyRecord> records);

// ESRI ASCII grid.
Raster read_esri_ascii(std::istream& in);
Raster read_esri_ascii(const std::filesystem::path& path);
void write_esri_ascii(std::ostream& out, const Raster& r, double nodata_value = -9999.0);
void write_esri_ascii(const std::filesystem::path& path, const Raster& r,
                      double nodata_value = -9999.0);

}  // namespace geoprev
