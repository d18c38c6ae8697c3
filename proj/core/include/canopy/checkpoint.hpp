#pragma once

#include <filesystem>
#include <optional>

#include "canopy/unet.hpp"

namespace canopy::nn {

inline constexpr int kCheckpointFormatVersion = 1;

// Writes `<path>` (JSON manifest) and `<stem>.bin` (float32 little-endian:
// params, then buffers, then momentum, each in enumeration order).
void save_model(const ModelState& state, const std::filesystem::path& path);

// When `expected` is given, the stored config must equal it
// (CheckpointMismatch otherwise).
ModelState load_model(const std::filesystem::path& path, const std::optional<UNetConfig>& expected = std::nullopt);

std::filesystem::path checkpoint_blob_path(const std::filesystem::path& manifest_path);

}  // namespace canopy::nn
