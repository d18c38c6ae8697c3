#include "canopy/stereochm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "canopy/error.hpp"
#include "canopy/text_io.hpp"

namespace canopy {

PointCloud read_point_cloud_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(bool(in), ErrorCode::IoError, "cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  require(detail::trim(line) == "x_m,y_m,z_m", ErrorCode::ParseError, path.string() + ": expected header x_m,y_m,z_m");
  PointCloud points;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const auto t = detail::trim(line);
    if (t.empty()) continue;
    const auto f = detail::split_csv_line(t);
    require(f.size() == 3, ErrorCode::ParseError, path.string() + ":" + std::to_string(line_no) + ": expected 3 fields");
    PointXYZ p{detail::parse_double(f[0], "x_m"), detail::parse_double(f[1], "y_m"), detail::parse_double(f[2], "z_m")};
    require(std::isfinite(p.x_m) && std::isfinite(p.y_m) && std::isfinite(p.z_m), ErrorCode::ParseError,
            path.string() + ":" + std::to_string(line_no) + ": non-finite coordinate");
    points.push_back(p);
  }
  return points;
}

void write_point_cloud_csv(std::span<const PointXYZ> points, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  require(bool(out), ErrorCode::IoError, "cannot write " + path.string());
  out << "x_m,y_m,z_m\n";
  for (const auto& p : points)
    out << detail::format_double(p.x_m) << ',' << detail::format_double(p.y_m) << ','
        << detail::format_double(p.z_m) << '\n';
  require(bool(out), ErrorCode::IoError, "write failed for " + path.string());
}

RasterStack rasterize_dsm(std::span<const PointXYZ> points, const GridSpec& spec) {
  if (points.empty()) fail(ErrorCode::EmptyCloud, "point cloud is empty");
  RasterStack dsm(spec, {"dsm_m"});
  auto band = dsm.band(0);
  std::fill(band.begin(), band.end(), dsm.nodata());
  for (const auto& p : points) {
    const auto cell = spec.cell_of({p.x_m, p.y_m});
    if (!cell) continue;
    float& v = dsm.at(0, cell->row, cell->col);
    const auto z = static_cast<float>(p.z_m);
    if (dsm.is_nodata(v) || z > v) v = z;
  }
  return dsm;
}

RasterStack chm(const RasterStack& dsm, const RasterStack& dtm) {
  require(dsm.spec() == dtm.spec(), ErrorCode::GridMismatch, "DSM and DTM grids differ");
  require(dsm.band_count() == 1 && dtm.band_count() == 1, ErrorCode::InvalidArgument, "CHM inputs must be single-band");
  RasterStack out(dsm.spec(), {"chm_m"}, dsm.nodata());
  const auto a = dsm.band(0);
  const auto b = dtm.band(0);
  auto o = out.band(0);
  for (std::size_t i = 0; i < o.size(); ++i) {
    if (dsm.is_nodata(a[i]) || dtm.is_nodata(b[i]))
      o[i] = out.nodata();
    else
      o[i] = std::max(0.0f, a[i] - b[i]);
  }
  return out;
}

RasterStack chm_to_grid(const RasterStack& fine_chm, const GridSpec& target) { return resample_max(fine_chm, target); }

}  // namespace canopy
