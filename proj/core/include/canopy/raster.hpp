#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace canopy {

inline constexpr float kDefaultNodata = -9999.0f;
inline constexpr std::int64_t kMaxGridCells = std::int64_t{1} << 31;

struct Point {
  double x = 0.0;
  double y = 0.0;
};

struct Cell {
  int row = 0;
  int col = 0;
  bool operator==(const Cell&) const = default;
  auto operator<=>(const Cell&) const = default;
};

/// Axis-aligned rectangle in meters.
struct Bounds {
  double min_x = 0.0;
  double min_y = 0.0;
  double max_x = 0.0;
  double max_y = 0.0;

  double width() const { return max_x - min_x; }
  double height() const { return max_y - min_y; }
  bool contains(Point p) const { return p.x >= min_x && p.x < max_x && p.y > min_y && p.y <= max_y; }
};

/// Rectangular block of cells, rows/cols counted from the top-left corner.
struct CellRect {
  int row = 0;
  int col = 0;
  int rows = 0;
  int cols = 0;

  bool contains(Cell c) const {
    return c.row >= row && c.row < row + rows && c.col >= col && c.col < col + cols;
  }
  bool operator==(const CellRect&) const = default;
};

/// North-up affine grid. The origin is the top-left corner; rows grow
/// downward (decreasing y) and columns grow eastward.
struct GridSpec {
  double origin_x_m = 0.0;
  double origin_y_m = 0.0;
  double cell_size_m = 10.0;
  int width = 1;
  int height = 1;

  void validate() const;
  std::int64_t cell_count() const { return std::int64_t{width} * height; }
  Point cell_center(int row, int col) const {
    return {origin_x_m + (col + 0.5) * cell_size_m, origin_y_m - (row + 0.5) * cell_size_m};
  }
  // Cell containing p, or nullopt when p falls outside the grid.
  std::optional<Cell> cell_of(Point p) const;
  Bounds bounds() const {
    return {origin_x_m, origin_y_m - height * cell_size_m, origin_x_m + width * cell_size_m, origin_y_m};
  }
  // Sub-grid for a block of cells.
  GridSpec sub_grid(const CellRect& rect) const;
  bool operator==(const GridSpec&) const = default;
};

/// Multi-band raster, band-sequential and row-major within a band.
class RasterStack {
 public:
  RasterStack() = default;
  RasterStack(GridSpec spec, std::vector<std::string> band_names, float nodata = kDefaultNodata);
  RasterStack(GridSpec spec, std::vector<std::string> band_names, std::vector<float> values,
              float nodata = kDefaultNodata);

  const GridSpec& spec() const { return spec_; }
  int band_count() const { return static_cast<int>(band_names_.size()); }
  const std::vector<std::string>& band_names() const { return band_names_; }
  float nodata() const { return nodata_; }
  bool is_nodata(float v) const { return v == nodata_; }

  std::optional<int> band_index(const std::string& name) const;
  std::span<const float> band(int b) const;
  std::span<float> band(int b);
  std::span<const float> values() const { return values_; }
  std::span<float> values() { return values_; }

  float at(int b, int row, int col) const { return values_[offset(b, row, col)]; }
  float& at(int b, int row, int col) { return values_[offset(b, row, col)]; }

 private:
  std::size_t offset(int b, int row, int col) const {
    return (static_cast<std::size_t>(b) * spec_.height + row) * spec_.width + col;
  }

  GridSpec spec_;
  std::vector<std::string> band_names_;
  std::vector<float> values_;
  float nodata_ = kDefaultNodata;
};

enum class SplitKind { Train, Validation, Test, Unassigned };
std::string to_string(SplitKind kind);

struct TileIndex {
  int tile_id = 0;
  int row = 0;
  int col = 0;
  Bounds bounds;
  SplitKind assignment = SplitKind::Unassigned;
};

/// Row-major tiles covering `area` (top row first); edge tiles may be partial.
std::vector<TileIndex> make_tiles(const Bounds& area, double tile_size_m);

// Cells of `spec` whose centers fall inside the tile bounds.
CellRect tile_cells(const GridSpec& spec, const Bounds& tile);

struct LabelEntry {
  int row = 0;
  int col = 0;
  float height_m = 0.0f;
  float weight = 1.0f;  // number of footprints merged into this pixel
};

/// Grid-aligned sparse labels. Stores both the entry list and a dense
/// value/mask view for O(1) window lookup.
class SparseLabelRaster {
 public:
  SparseLabelRaster() = default;
  explicit SparseLabelRaster(GridSpec spec);
  SparseLabelRaster(GridSpec spec, std::vector<LabelEntry> entries);

  const GridSpec& spec() const { return spec_; }
  const std::vector<LabelEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool has_label(int row, int col) const { return index_[flat(row, col)] >= 0; }
  std::optional<float> label(int row, int col) const;
  // Number of labeled pixels inside a block, clipped to the grid.
  std::size_t count_in(const CellRect& rect) const;
  SparseLabelRaster window(const CellRect& rect) const;

 private:
  std::size_t flat(int row, int col) const { return static_cast<std::size_t>(row) * spec_.width + col; }
  GridSpec spec_;
  std::vector<LabelEntry> entries_;
  std::vector<std::int32_t> index_;
};

/// Copy of a block of cells with its own shifted GridSpec.
RasterStack window(const RasterStack& stack, const CellRect& rect);
RasterStack window(const RasterStack& stack, Cell origin, int size_cells);

// Max over source cells whose centers fall inside each target cell.
RasterStack resample_max(const RasterStack& src, const GridSpec& target);

// Bilinear upsampling with cell-center sample positions (align-corners false).
RasterStack upsample_bilinear_raster(const RasterStack& src, int factor);

enum class CircleMode {
  Intersect,       // pixel square overlaps the disk with positive area
  CenterInCircle,  // pixel center lies inside the disk
};

std::vector<Cell> circle_pixels(const GridSpec& spec, Point center, double diameter_m,
                                CircleMode mode = CircleMode::Intersect);

using Polygon = std::vector<Point>;

bool is_simple_polygon(const Polygon& polygon);
bool point_in_polygon(const Polygon& polygon, Point p);
// Pixels whose centers fall inside a simple polygon (even-odd rule).
std::vector<Cell> polygon_pixels(const GridSpec& spec, const Polygon& polygon);

}  // namespace canopy
