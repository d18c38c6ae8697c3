#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <vector>

#include "canopy/error.hpp"

namespace canopy::detail {

inline std::uint32_t byteswap32(std::uint32_t v) {
  return (v >> 24) | ((v >> 8) & 0xff00u) | ((v << 8) & 0xff0000u) | (v << 24);
}

// Writes float32 values little-endian regardless of host order.
inline void write_f32_le(std::ofstream& out, std::span<const float> values) {
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(values.data()),
              static_cast<std::streamsize>(values.size() * sizeof(float)));
  } else {
    for (float v : values) {
      std::uint32_t u;
      std::memcpy(&u, &v, 4);
      u = byteswap32(u);
      out.write(reinterpret_cast<const char*>(&u), 4);
    }
  }
}

inline std::vector<float> read_f32_le_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(bool(in), ErrorCode::IoError, "cannot open " + path.string());
  in.seekg(0, std::ios::end);
  const auto bytes = static_cast<std::size_t>(in.tellg());
  in.seekg(0);
  require(bytes % 4 == 0, ErrorCode::ParseError, path.string() + " is not a float32 blob");
  std::vector<float> values(bytes / 4);
  in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(bytes));
  require(bool(in), ErrorCode::IoError, "short read on " + path.string());
  if constexpr (std::endian::native != std::endian::little) {
    for (auto& v : values) {
      std::uint32_t u;
      std::memcpy(&u, &v, 4);
      u = byteswap32(u);
      std::memcpy(&v, &u, 4);
    }
  }
  return values;
}

}  // namespace canopy::detail
