#pragma once

#include <charconv>
#include <cstdio>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "canopy/error.hpp"

namespace canopy::detail {

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return fields;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline double parse_double(std::string_view s, std::string_view what) {
  s = trim(s);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  require(ec == std::errc() && ptr == s.data() + s.size(), ErrorCode::ParseError,
          "bad number for " + std::string(what) + ": '" + std::string(s) + "'");
  return v;
}

inline std::optional<double> parse_optional_double(std::string_view s, std::string_view what) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  return parse_double(s, what);
}

template <typename Int>
Int parse_int(std::string_view s, std::string_view what) {
  s = trim(s);
  Int v{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  require(ec == std::errc() && ptr == s.data() + s.size(), ErrorCode::ParseError,
          "bad integer for " + std::string(what) + ": '" + std::string(s) + "'");
  return v;
}

// Shortest text that parses back to exactly this double.
inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) return std::to_string(v);
  return std::string(buf, ptr);
}

inline std::string format_optional(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

}  // namespace canopy::detail
