#include "canopy/raster.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "canopy/error.hpp"

namespace canopy {

void GridSpec::validate() const {
  require(std::isfinite(cell_size_m) && cell_size_m > 0.0, ErrorCode::InvalidArgument,
          "cell_size_m must be positive");
  require(std::isfinite(origin_x_m) && std::isfinite(origin_y_m), ErrorCode::InvalidArgument,
          "grid origin must be finite");
  require(width >= 1 && height >= 1, ErrorCode::InvalidArgument, "grid must have at least one cell");
  require(cell_count() <= kMaxGridCells, ErrorCode::InvalidArgument, "grid exceeds maximum cell count");
}

std::optional<Cell> GridSpec::cell_of(Point p) const {
  const double fc = std::floor((p.x - origin_x_m) / cell_size_m);
  const double fr = std::floor((origin_y_m - p.y) / cell_size_m);
  if (!(fc >= 0.0 && fc < width && fr >= 0.0 && fr < height)) return std::nullopt;
  return Cell{static_cast<int>(fr), static_cast<int>(fc)};
}

GridSpec GridSpec::sub_grid(const CellRect& rect) const {
  GridSpec g = *this;
  g.origin_x_m = origin_x_m + rect.col * cell_size_m;
  g.origin_y_m = origin_y_m - rect.row * cell_size_m;
  g.width = rect.cols;
  g.height = rect.rows;
  return g;
}

RasterStack::RasterStack(GridSpec spec, std::vector<std::string> band_names, float nodata)
    : spec_(spec), band_names_(std::move(band_names)), nodata_(nodata) {
  spec_.validate();
  require(!band_names_.empty(), ErrorCode::InvalidArgument, "raster needs at least one band");
  std::set<std::string> unique(band_names_.begin(), band_names_.end());
  require(unique.size() == band_names_.size(), ErrorCode::InvalidArgument, "band names must be unique");
  values_.assign(band_names_.size() * static_cast<std::size_t>(spec_.cell_count()), 0.0f);
}

RasterStack::RasterStack(GridSpec spec, std::vector<std::string> band_names, std::vector<float> values,
                         float nodata)
    : spec_(spec), band_names_(std::move(band_names)), values_(std::move(values)), nodata_(nodata) {
  spec_.validate();
  require(!band_names_.empty(), ErrorCode::InvalidArgument, "raster needs at least one band");
  std::set<std::string> unique(band_names_.begin(), band_names_.end());
  require(unique.size() == band_names_.size(), ErrorCode::InvalidArgument, "band names must be unique");
  require(values_.size() == band_names_.size() * static_cast<std::size_t>(spec_.cell_count()),
          ErrorCode::InvalidArgument, "raster value count does not match bands*width*height");
}

std::optional<int> RasterStack::band_index(const std::string& name) const {
  auto it = std::find(band_names_.begin(), band_names_.end(), name);
  if (it == band_names_.end()) return std::nullopt;
  return static_cast<int>(it - band_names_.begin());
}

std::span<const float> RasterStack::band(int b) const {
  const auto n = static_cast<std::size_t>(spec_.cell_count());
  return std::span<const float>(values_).subspan(static_cast<std::size_t>(b) * n, n);
}

std::span<float> RasterStack::band(int b) {
  const auto n = static_cast<std::size_t>(spec_.cell_count());
  return std::span<float>(values_).subspan(static_cast<std::size_t>(b) * n, n);
}

std::string to_string(SplitKind kind) {
  switch (kind) {
    case SplitKind::Train: return "train";
    case SplitKind::Validation: return "validation";
    case SplitKind::Test: return "test";
    case SplitKind::Unassigned: return "unassigned";
  }
  return "unassigned";
}

namespace {

// Number of tile_size steps needed to cover `extent`, tolerant to round-off
// when the extent is an exact multiple.
int tile_steps(double extent, double tile_size) {
  const double q = extent / tile_size;
  const double r = std::round(q);
  if (std::abs(q - r) < 1e-9 * std::max(1.0, q)) return static_cast<int>(r);
  return static_cast<int>(std::ceil(q));
}

}  // namespace

std::vector<TileIndex> make_tiles(const Bounds& area, double tile_size_m) {
  require(std::isfinite(tile_size_m) && tile_size_m > 0.0, ErrorCode::InvalidArgument,
          "tile size must be positive");
  require(std::isfinite(area.min_x) && std::isfinite(area.max_x) && std::isfinite(area.min_y) &&
              std::isfinite(area.max_y) && area.width() > 0.0 && area.height() > 0.0,
          ErrorCode::InvalidBounds, "area bounds are degenerate");
  const int cols = tile_steps(area.width(), tile_size_m);
  const int rows = tile_steps(area.height(), tile_size_m);
  std::vector<TileIndex> tiles;
  tiles.reserve(static_cast<std::size_t>(rows) * cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      TileIndex t;
      t.tile_id = r * cols + c;
      t.row = r;
      t.col = c;
      t.bounds.min_x = area.min_x + c * tile_size_m;
      t.bounds.max_x = c + 1 == cols ? area.max_x : std::min(area.max_x, area.min_x + (c + 1) * tile_size_m);
      t.bounds.max_y = area.max_y - r * tile_size_m;
      t.bounds.min_y = r + 1 == rows ? area.min_y : std::max(area.min_y, area.max_y - (r + 1) * tile_size_m);
      tiles.push_back(t);
    }
  }
  return tiles;
}

CellRect tile_cells(const GridSpec& spec, const Bounds& tile) {
  const double cs = spec.cell_size_m;
  int c0 = static_cast<int>(std::ceil((tile.min_x - spec.origin_x_m) / cs - 0.5));
  int c1 = static_cast<int>(std::ceil((tile.max_x - spec.origin_x_m) / cs - 0.5));
  int r0 = static_cast<int>(std::ceil((spec.origin_y_m - tile.max_y) / cs - 0.5));
  int r1 = static_cast<int>(std::ceil((spec.origin_y_m - tile.min_y) / cs - 0.5));
  c0 = std::clamp(c0, 0, spec.width);
  c1 = std::clamp(c1, 0, spec.width);
  r0 = std::clamp(r0, 0, spec.height);
  r1 = std::clamp(r1, 0, spec.height);
  return {r0, c0, std::max(0, r1 - r0), std::max(0, c1 - c0)};
}

SparseLabelRaster::SparseLabelRaster(GridSpec spec) : SparseLabelRaster(spec, {}) {}

SparseLabelRaster::SparseLabelRaster(GridSpec spec, std::vector<LabelEntry> entries)
    : spec_(spec), entries_(std::move(entries)) {
  spec_.validate();
  index_.assign(static_cast<std::size_t>(spec_.cell_count()), -1);
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& e = entries_[i];
    require(e.row >= 0 && e.row < spec_.height && e.col >= 0 && e.col < spec_.width,
            ErrorCode::InvalidArgument, "label entry outside grid");
    require(std::isfinite(e.height_m) && e.height_m >= 0.0f, ErrorCode::InvalidArgument,
            "label heights must be finite and non-negative");
    auto& slot = index_[flat(e.row, e.col)];
    require(slot < 0, ErrorCode::InvalidArgument, "duplicate label entry for one pixel");
    slot = static_cast<std::int32_t>(i);
  }
}

std::optional<float> SparseLabelRaster::label(int row, int col) const {
  const auto idx = index_[flat(row, col)];
  if (idx < 0) return std::nullopt;
  return entries_[static_cast<std::size_t>(idx)].height_m;
}

std::size_t SparseLabelRaster::count_in(const CellRect& rect) const {
  const int r0 = std::max(0, rect.row), r1 = std::min(spec_.height, rect.row + rect.rows);
  const int c0 = std::max(0, rect.col), c1 = std::min(spec_.width, rect.col + rect.cols);
  std::size_t n = 0;
  for (int r = r0; r < r1; ++r)
    for (int c = c0; c < c1; ++c) n += index_[flat(r, c)] >= 0 ? 1 : 0;
  return n;
}

SparseLabelRaster SparseLabelRaster::window(const CellRect& rect) const {
  require(rect.row >= 0 && rect.col >= 0 && rect.rows >= 1 && rect.cols >= 1 &&
              rect.row + rect.rows <= spec_.height && rect.col + rect.cols <= spec_.width,
          ErrorCode::WindowOutOfBounds, "label window outside grid");
  std::vector<LabelEntry> out;
  for (int r = rect.row; r < rect.row + rect.rows; ++r) {
    for (int c = rect.col; c < rect.col + rect.cols; ++c) {
      const auto idx = index_[flat(r, c)];
      if (idx < 0) continue;
      LabelEntry e = entries_[static_cast<std::size_t>(idx)];
      e.row -= rect.row;
      e.col -= rect.col;
      out.push_back(e);
    }
  }
  return SparseLabelRaster(spec_.sub_grid(rect), std::move(out));
}

RasterStack window(const RasterStack& stack, const CellRect& rect) {
  const auto& spec = stack.spec();
  require(rect.rows >= 1 && rect.cols >= 1 && rect.row >= 0 && rect.col >= 0 &&
              rect.row + rect.rows <= spec.height && rect.col + rect.cols <= spec.width,
          ErrorCode::WindowOutOfBounds, "window is not fully inside the raster");
  RasterStack out(spec.sub_grid(rect), stack.band_names(), stack.nodata());
  for (int b = 0; b < stack.band_count(); ++b) {
    auto src = stack.band(b);
    auto dst = out.band(b);
    for (int r = 0; r < rect.rows; ++r) {
      const auto* from = src.data() + static_cast<std::size_t>(rect.row + r) * spec.width + rect.col;
      std::copy(from, from + rect.cols, dst.data() + static_cast<std::size_t>(r) * rect.cols);
    }
  }
  return out;
}

RasterStack window(const RasterStack& stack, Cell origin, int size_cells) {
  return window(stack, CellRect{origin.row, origin.col, size_cells, size_cells});
}

RasterStack resample_max(const RasterStack& src, const GridSpec& target) {
  target.validate();
  require(src.band_count() == 1, ErrorCode::InvalidArgument, "resample_max expects a single band");
  require(target.cell_size_m >= src.spec().cell_size_m * (1.0 - 1e-12), ErrorCode::ResampleDirectionError,
          "target grid is finer than the source grid");
  const auto& s = src.spec();
  RasterStack out(target, src.band_names(), src.nodata());
  auto dst = out.band(0);
  std::fill(dst.begin(), dst.end(), src.nodata());
  std::vector<std::uint8_t> seen(dst.size(), 0);
  auto values = src.band(0);
  for (int r = 0; r < s.height; ++r) {
    for (int c = 0; c < s.width; ++c) {
      const float v = values[static_cast<std::size_t>(r) * s.width + c];
      if (src.is_nodata(v) || std::isnan(v)) continue;
      auto cell = target.cell_of(s.cell_center(r, c));
      if (!cell) continue;
      const auto i = static_cast<std::size_t>(cell->row) * target.width + cell->col;
      if (!seen[i] || v > dst[i]) dst[i] = v;
      seen[i] = 1;
    }
  }
  return out;
}

RasterStack upsample_bilinear_raster(const RasterStack& src, int factor) {
  require(factor >= 2, ErrorCode::InvalidFactor, "upsampling factor must be >= 2");
  const auto& s = src.spec();
  GridSpec t = s;
  t.cell_size_m = s.cell_size_m / factor;
  t.width = s.width * factor;
  t.height = s.height * factor;
  RasterStack out(t, src.band_names(), src.nodata());

  struct Tap {
    int i0, i1;
    double w1;
  };
  auto taps = [factor](int n_out, int n_in) {
    std::vector<Tap> v(static_cast<std::size_t>(n_out));
    for (int o = 0; o < n_out; ++o) {
      double pos = (o + 0.5) / factor - 0.5;
      pos = std::max(pos, 0.0);
      int i0 = std::min(static_cast<int>(std::floor(pos)), n_in - 1);
      int i1 = std::min(i0 + 1, n_in - 1);
      v[static_cast<std::size_t>(o)] = {i0, i1, pos - i0};
    }
    return v;
  };
  const auto tx = taps(t.width, s.width);
  const auto ty = taps(t.height, s.height);

  for (int b = 0; b < src.band_count(); ++b) {
    auto in = src.band(b);
    auto dst = out.band(b);
    auto px = [&](int r, int c) { return in[static_cast<std::size_t>(r) * s.width + c]; };
    for (int r = 0; r < t.height; ++r) {
      const auto& y = ty[static_cast<std::size_t>(r)];
      for (int c = 0; c < t.width; ++c) {
        const auto& x = tx[static_cast<std::size_t>(c)];
        const float v00 = px(y.i0, x.i0), v01 = px(y.i0, x.i1);
        const float v10 = px(y.i1, x.i0), v11 = px(y.i1, x.i1);
        const double w00 = (1 - y.w1) * (1 - x.w1), w01 = (1 - y.w1) * x.w1;
        const double w10 = y.w1 * (1 - x.w1), w11 = y.w1 * x.w1;
        auto bad = [&](float v, double w) { return w > 0.0 && (src.is_nodata(v) || std::isnan(v)); };
        float result;
        if (bad(v00, w00) || bad(v01, w01) || bad(v10, w10) || bad(v11, w11)) {
          result = src.nodata();
        } else {
          double acc = 0.0;
          if (w00 > 0) acc += w00 * v00;
          if (w01 > 0) acc += w01 * v01;
          if (w10 > 0) acc += w10 * v10;
          if (w11 > 0) acc += w11 * v11;
          result = static_cast<float>(acc);
        }
        dst[static_cast<std::size_t>(r) * t.width + c] = result;
      }
    }
  }
  return out;
}

std::vector<Cell> circle_pixels(const GridSpec& spec, Point center, double diameter_m, CircleMode mode) {
  require(std::isfinite(diameter_m) && diameter_m > 0.0, ErrorCode::InvalidArgument,
          "circle diameter must be positive");
  const double radius = 0.5 * diameter_m;
  const double cs = spec.cell_size_m;
  const int c0 = std::max(0, static_cast<int>(std::floor((center.x - radius - spec.origin_x_m) / cs)));
  const int c1 = std::min(spec.width - 1, static_cast<int>(std::floor((center.x + radius - spec.origin_x_m) / cs)));
  const int r0 = std::max(0, static_cast<int>(std::floor((spec.origin_y_m - center.y - radius) / cs)));
  const int r1 = std::min(spec.height - 1, static_cast<int>(std::floor((spec.origin_y_m - center.y + radius) / cs)));
  std::vector<Cell> out;
  for (int r = r0; r <= r1; ++r) {
    for (int c = c0; c <= c1; ++c) {
      double d2;
      if (mode == CircleMode::Intersect) {
        const double x_lo = spec.origin_x_m + c * cs, x_hi = x_lo + cs;
        const double y_hi = spec.origin_y_m - r * cs, y_lo = y_hi - cs;
        const double dx = std::max({x_lo - center.x, 0.0, center.x - x_hi});
        const double dy = std::max({y_lo - center.y, 0.0, center.y - y_hi});
        d2 = dx * dx + dy * dy;
      } else {
        const Point p = spec.cell_center(r, c);
        d2 = (p.x - center.x) * (p.x - center.x) + (p.y - center.y) * (p.y - center.y);
      }
      if (d2 < radius * radius) out.push_back({r, c});
    }
  }
  return out;
}

namespace {

double cross(Point o, Point a, Point b) { return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x); }

bool on_segment(Point p, Point a, Point b) {
  return std::min(a.x, b.x) <= p.x && p.x <= std::max(a.x, b.x) && std::min(a.y, b.y) <= p.y &&
         p.y <= std::max(a.y, b.y);
}

bool segments_intersect(Point a, Point b, Point c, Point d) {
  const double d1 = cross(c, d, a), d2 = cross(c, d, b);
  const double d3 = cross(a, b, c), d4 = cross(a, b, d);
  if (((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) && ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0))) return true;
  if (d1 == 0 && on_segment(a, c, d)) return true;
  if (d2 == 0 && on_segment(b, c, d)) return true;
  if (d3 == 0 && on_segment(c, a, b)) return true;
  if (d4 == 0 && on_segment(d, a, b)) return true;
  return false;
}

}  // namespace

bool is_simple_polygon(const Polygon& polygon) {
  const std::size_t n = polygon.size();
  if (n < 3) return false;
  for (const auto& p : polygon)
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) return false;
  for (std::size_t i = 0; i < n; ++i) {
    const Point a = polygon[i], b = polygon[(i + 1) % n];
    if (a.x == b.x && a.y == b.y) return false;
    for (std::size_t j = i + 1; j < n; ++j) {
      // adjacent edges share a vertex by construction
      if (j == i + 1 || (i == 0 && j == n - 1)) continue;
      if (segments_intersect(a, b, polygon[j], polygon[(j + 1) % n])) return false;
    }
  }
  return true;
}

bool point_in_polygon(const Polygon& polygon, Point p) {
  bool inside = false;
  const std::size_t n = polygon.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Point a = polygon[i], b = polygon[j];
    if ((a.y > p.y) != (b.y > p.y)) {
      const double x_cross = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
      if (p.x < x_cross) inside = !inside;
    }
  }
  return inside;
}

std::vector<Cell> polygon_pixels(const GridSpec& spec, const Polygon& polygon) {
  require(is_simple_polygon(polygon), ErrorCode::InvalidPolygon, "polygon must be simple with >= 3 vertices");
  double min_x = std::numeric_limits<double>::infinity(), max_x = -min_x;
  double min_y = min_x, max_y = -min_x;
  for (const auto& p : polygon) {
    min_x = std::min(min_x, p.x);
    max_x = std::max(max_x, p.x);
    min_y = std::min(min_y, p.y);
    max_y = std::max(max_y, p.y);
  }
  const double cs = spec.cell_size_m;
  const int c0 = std::max(0, static_cast<int>(std::floor((min_x - spec.origin_x_m) / cs)));
  const int c1 = std::min(spec.width - 1, static_cast<int>(std::floor((max_x - spec.origin_x_m) / cs)));
  const int r0 = std::max(0, static_cast<int>(std::floor((spec.origin_y_m - max_y) / cs)));
  const int r1 = std::min(spec.height - 1, static_cast<int>(std::floor((spec.origin_y_m - min_y) / cs)));
  std::vector<Cell> out;
  for (int r = r0; r <= r1; ++r)
    for (int c = c0; c <= c1; ++c)
      if (point_in_polygon(polygon, spec.cell_center(r, c))) out.push_back({r, c});
  return out;
}

}  // namespace canopy
