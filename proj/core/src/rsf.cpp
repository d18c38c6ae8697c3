#include "canopy/rsf.hpp"

#include <algorithm>
#include <fstream>

#include "canopy/binary_io.hpp"
#include "canopy/error.hpp"
#include "json.hpp"

namespace canopy {

using nlohmann::json;

std::filesystem::path rsf_data_path(const std::filesystem::path& header_path) {
  auto p = header_path;
  require(p.extension() != ".bin", ErrorCode::InvalidArgument, "RSF header path must not end in .bin");
  p.replace_extension(".bin");
  return p;
}

void write_rsf(const RasterStack& stack, const std::filesystem::path& header_path) {
  const auto& s = stack.spec();
  json header = {
      {"width", s.width},
      {"height", s.height},
      {"bands", stack.band_count()},
      {"band_names", stack.band_names()},
      {"cell_size_m", s.cell_size_m},
      {"origin_x_m", s.origin_x_m},
      {"origin_y_m", s.origin_y_m},
      {"nodata", static_cast<double>(stack.nodata())},
  };
  if (header_path.has_parent_path()) std::filesystem::create_directories(header_path.parent_path());
  {
    std::ofstream out(header_path);
    require(bool(out), ErrorCode::IoError, "cannot write " + header_path.string());
    out << header.dump(2) << '\n';
    require(bool(out), ErrorCode::IoError, "write failed for " + header_path.string());
  }
  std::ofstream data(rsf_data_path(header_path), std::ios::binary);
  require(bool(data), ErrorCode::IoError, "cannot write " + rsf_data_path(header_path).string());
  detail::write_f32_le(data, stack.values());
  require(bool(data), ErrorCode::IoError, "write failed for " + rsf_data_path(header_path).string());
}

RasterStack read_rsf(const std::filesystem::path& header_path) {
  std::ifstream in(header_path);
  require(bool(in), ErrorCode::IoError, "cannot open " + header_path.string());
  json header;
  try {
    in >> header;
  } catch (const json::exception& e) {
    fail(ErrorCode::ParseError, header_path.string() + ": " + e.what());
  }
  GridSpec spec;
  std::vector<std::string> names;
  int bands = 0;
  float nodata = kDefaultNodata;
  try {
    spec.width = header.at("width").get<int>();
    spec.height = header.at("height").get<int>();
    spec.cell_size_m = header.at("cell_size_m").get<double>();
    spec.origin_x_m = header.at("origin_x_m").get<double>();
    spec.origin_y_m = header.at("origin_y_m").get<double>();
    bands = header.at("bands").get<int>();
    names = header.at("band_names").get<std::vector<std::string>>();
    nodata = static_cast<float>(header.at("nodata").get<double>());
  } catch (const json::exception& e) {
    fail(ErrorCode::ParseError, header_path.string() + ": " + e.what());
  }
  require(bands == static_cast<int>(names.size()), ErrorCode::ParseError,
          "band count does not match band_names in " + header_path.string());
  auto values = detail::read_f32_le_file(rsf_data_path(header_path));
  require(values.size() == static_cast<std::size_t>(bands) * static_cast<std::size_t>(spec.cell_count()),
          ErrorCode::ParseError, "RSF data size mismatch for " + header_path.string());
  return RasterStack(spec, std::move(names), std::move(values), nodata);
}

void write_labels_rsf(const SparseLabelRaster& labels, const std::filesystem::path& header_path) {
  RasterStack out(labels.spec(), {"rh95_m", "weight"});
  std::fill(out.values().begin(), out.values().end(), out.nodata());
  for (const auto& e : labels.entries()) {
    out.at(0, e.row, e.col) = e.height_m;
    out.at(1, e.row, e.col) = e.weight;
  }
  write_rsf(out, header_path);
}

SparseLabelRaster read_labels_rsf(const std::filesystem::path& header_path) {
  const auto stack = read_rsf(header_path);
  require(stack.band_count() == 2 && stack.band_names()[0] == "rh95_m" && stack.band_names()[1] == "weight",
          ErrorCode::ParseError, header_path.string() + " is not a label raster");
  std::vector<LabelEntry> entries;
  const auto& g = stack.spec();
  for (int r = 0; r < g.height; ++r)
    for (int c = 0; c < g.width; ++c) {
      const float h = stack.at(0, r, c);
      if (stack.is_nodata(h)) continue;
      const float w = stack.at(1, r, c);
      entries.push_back({r, c, h, stack.is_nodata(w) ? 1.0f : w});
    }
  return SparseLabelRaster(g, std::move(entries));
}

}  // namespace canopy
