#include <fstream>

#include "canopy/error.hpp"
#include "canopy/evalkit.hpp"
#include "canopy/text_io.hpp"
#include "json.hpp"

namespace canopy {

using nlohmann::json;

namespace {

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> opt_from(const json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

}  // namespace

void emit_report(std::span<const DatasetReport> reports, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  {
    std::ofstream out(dir / "metrics.csv");
    require(bool(out), ErrorCode::IoError, "cannot write " + (dir / "metrics.csv").string());
    out << kMetricsCsvHeader << '\n';
    for (const auto& r : reports) {
      const auto& m = r.metrics;
      out << r.dataset << ',' << r.scenario << ',' << m.n << ',' << detail::format_double(m.mae) << ','
          << detail::format_double(m.rmse) << ',' << detail::format_double(m.me) << ','
          << detail::format_optional(m.r2) << ',' << detail::format_double(m.sb) << ','
          << detail::format_double(m.sdsd) << ',' << detail::format_double(m.lcs) << '\n';
    }
    require(bool(out), ErrorCode::IoError, "write failed for metrics.csv");
  }
  json all = json::array();
  for (const auto& r : reports) {
    json bins = json::object();
    for (const auto& b : r.bins) {
      bins[detail::format_double(b.lower_m)] = {
          {"upper_m", b.upper_m}, {"n", b.n},         {"median", opt(b.median)}, {"q25", opt(b.q25)},
          {"q75", opt(b.q75)},    {"p5", opt(b.p5)},  {"p95", opt(b.p95)},       {"me", opt(b.me)},
          {"mae", opt(b.mae)},
      };
    }
    all.push_back({{"dataset", r.dataset}, {"scenario", r.scenario}, {"bins", bins}});
  }
  std::ofstream out(dir / "bin_stats.json");
  require(bool(out), ErrorCode::IoError, "cannot write " + (dir / "bin_stats.json").string());
  out << all.dump(2) << '\n';
  require(bool(out), ErrorCode::IoError, "write failed for bin_stats.json");
}

std::vector<DatasetReport> read_report(const std::filesystem::path& dir) {
  std::vector<DatasetReport> reports;
  {
    std::ifstream in(dir / "metrics.csv");
    require(bool(in), ErrorCode::IoError, "cannot open " + (dir / "metrics.csv").string());
    std::string line;
    std::getline(in, line);
    require(detail::trim(line) == kMetricsCsvHeader, ErrorCode::ParseError, "metrics.csv: unexpected header");
    while (std::getline(in, line)) {
      const auto t = detail::trim(line);
      if (t.empty()) continue;
      const auto f = detail::split_csv_line(t);
      require(f.size() == 10, ErrorCode::ParseError, "metrics.csv: expected 10 fields");
      DatasetReport r;
      r.dataset = std::string(f[0]);
      r.scenario = detail::parse_int<int>(f[1], "scenario");
      auto& m = r.metrics;
      m.n = detail::parse_int<std::size_t>(f[2], "n");
      m.mae = detail::parse_double(f[3], "mae_m");
      m.rmse = detail::parse_double(f[4], "rmse_m");
      m.me = detail::parse_double(f[5], "me_m");
      m.r2 = detail::parse_optional_double(f[6], "r2");
      m.sb = detail::parse_double(f[7], "sb");
      m.sdsd = detail::parse_double(f[8], "sdsd");
      m.lcs = detail::parse_double(f[9], "lcs");
      reports.push_back(std::move(r));
    }
  }
  std::ifstream in(dir / "bin_stats.json");
  if (!in) return reports;
  json all;
  try {
    in >> all;
    require(all.size() == reports.size(), ErrorCode::ParseError, "bin_stats.json does not match metrics.csv");
    for (std::size_t i = 0; i < reports.size(); ++i) {
      for (const auto& [key, b] : all[i].at("bins").items()) {
        BinStats s;
        s.lower_m = detail::parse_double(key, "bin edge");
        s.upper_m = b.at("upper_m").get<double>();
        s.n = b.at("n").get<std::size_t>();
        s.median = opt_from(b.at("median"));
        s.q25 = opt_from(b.at("q25"));
        s.q75 = opt_from(b.at("q75"));
        s.p5 = opt_from(b.at("p5"));
        s.p95 = opt_from(b.at("p95"));
        s.me = opt_from(b.at("me"));
        s.mae = opt_from(b.at("mae"));
        reports[i].bins.push_back(s);
      }
      std::sort(reports[i].bins.begin(), reports[i].bins.end(),
                [](const BinStats& a, const BinStats& b) { return a.lower_m < b.lower_m; });
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::ParseError, std::string("bin_stats.json: ") + e.what());
  }
  return reports;
}

}  // namespace canopy
