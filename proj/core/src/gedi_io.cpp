#include <fstream>

#include "canopy/error.hpp"
#include "canopy/gedi.hpp"
#include "canopy/text_io.hpp"
#include "json.hpp"

namespace canopy {

using detail::format_double;
using detail::format_optional;
using detail::parse_optional_double;

std::vector<FootprintRecord> read_footprints_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(bool(in), ErrorCode::IoError, "cannot open " + path.string());
  std::string line;
  require(bool(std::getline(in, line)), ErrorCode::ParseError, path.string() + " is empty");
  require(detail::trim(line) == kFootprintCsvHeader, ErrorCode::ParseError,
          path.string() + ": unexpected footprint CSV header");
  std::vector<FootprintRecord> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto f = detail::split_csv_line(line);
    require(f.size() == 13, ErrorCode::ParseError,
            path.string() + ":" + std::to_string(line_no) + ": expected 13 fields");
    FootprintRecord r;
    r.id = detail::parse_int<std::int64_t>(f[0], "id");
    r.x_m = detail::parse_double(f[1], "x_m");
    r.y_m = detail::parse_double(f[2], "y_m");
    r.acquired_at = std::string(detail::trim(f[3]));
    r.rh95_m = parse_optional_double(f[4], "rh95_m");
    r.rh100_m = parse_optional_double(f[5], "rh100_m");
    r.quality_flag = detail::parse_int<int>(f[6], "quality_flag");
    r.toploc = parse_optional_double(f[7], "toploc");
    r.botloc = parse_optional_double(f[8], "botloc");
    r.num_detectedmodes = parse_optional_double(f[9], "num_detectedmodes");
    r.max_amplitude = parse_optional_double(f[10], "max_amplitude");
    r.noise_std = parse_optional_double(f[11], "noise_std");
    if (!detail::trim(f[12]).empty()) r.selected_algorithm = detail::parse_int<int>(f[12], "selected_algorithm");
    out.push_back(std::move(r));
  }
  return out;
}

void write_footprints_csv(std::span<const FootprintRecord> records, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  require(bool(out), ErrorCode::IoError, "cannot write " + path.string());
  out << kFootprintCsvHeader << '\n';
  for (const auto& r : records) {
    out << r.id << ',' << format_double(r.x_m) << ',' << format_double(r.y_m) << ',' << r.acquired_at << ','
        << format_optional(r.rh95_m) << ',' << format_optional(r.rh100_m) << ',' << r.quality_flag << ','
        << format_optional(r.toploc) << ',' << format_optional(r.botloc) << ','
        << format_optional(r.num_detectedmodes) << ',' << format_optional(r.max_amplitude) << ','
        << format_optional(r.noise_std) << ',';
    if (r.selected_algorithm) out << *r.selected_algorithm;
    out << '\n';
  }
  require(bool(out), ErrorCode::IoError, "write failed for " + path.string());
}

void write_filter_report(const FilterReport& report, const std::filesystem::path& path) {
  nlohmann::json j;
  j["kept"] = report.kept;
  auto rejected = nlohmann::json::array();
  for (const auto& [id, reason] : report.rejected) rejected.push_back({{"id", id}, {"reason", to_string(reason)}});
  j["rejected"] = rejected;
  j["kept_count"] = report.kept.size();
  j["rejected_count"] = report.rejected.size();
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  require(bool(out), ErrorCode::IoError, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

FilterReport read_filter_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(bool(in), ErrorCode::IoError, "cannot open " + path.string());
  FilterReport report;
  try {
    nlohmann::json j;
    in >> j;
    report.kept = j.at("kept").get<std::vector<std::int64_t>>();
    for (const auto& r : j.at("rejected"))
      report.rejected.emplace_back(r.at("id").get<std::int64_t>(),
                                   parse_reject_reason(r.at("reason").get<std::string>()));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
  return report;
}

namespace {

constexpr const char* kTilesCsvHeader = "tile_id,row,col,min_x,min_y,max_x,max_y,assignment";

SplitKind parse_split_kind(std::string_view text) {
  for (auto k : {SplitKind::Train, SplitKind::Validation, SplitKind::Test, SplitKind::Unassigned})
    if (to_string(k) == text) return k;
  fail(ErrorCode::ParseError, "unknown split '" + std::string(text) + "'");
}

}  // namespace

void write_tiles_csv(std::span<const TileIndex> tiles, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  require(bool(out), ErrorCode::IoError, "cannot write " + path.string());
  out << kTilesCsvHeader << '\n';
  for (const auto& t : tiles)
    out << t.tile_id << ',' << t.row << ',' << t.col << ',' << format_double(t.bounds.min_x) << ','
        << format_double(t.bounds.min_y) << ',' << format_double(t.bounds.max_x) << ','
        << format_double(t.bounds.max_y) << ',' << to_string(t.assignment) << '\n';
  require(bool(out), ErrorCode::IoError, "write failed for " + path.string());
}

std::vector<TileIndex> read_tiles_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(bool(in), ErrorCode::IoError, "cannot open " + path.string());
  std::string line;
  require(bool(std::getline(in, line)) && detail::trim(line) == kTilesCsvHeader, ErrorCode::ParseError,
          path.string() + ": unexpected tile CSV header");
  std::vector<TileIndex> tiles;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    const auto f = detail::split_csv_line(line);
    require(f.size() == 8, ErrorCode::ParseError, path.string() + ": expected 8 fields");
    TileIndex t;
    t.tile_id = detail::parse_int<int>(f[0], "tile_id");
    t.row = detail::parse_int<int>(f[1], "row");
    t.col = detail::parse_int<int>(f[2], "col");
    t.bounds = {detail::parse_double(f[3], "min_x"), detail::parse_double(f[4], "min_y"),
                detail::parse_double(f[5], "max_x"), detail::parse_double(f[6], "max_y")};
    t.assignment = parse_split_kind(detail::trim(f[7]));
    tiles.push_back(t);
  }
  return tiles;
}

}  // namespace canopy
