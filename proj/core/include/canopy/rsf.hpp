#pragma once

#include <filesystem>

#include "canopy/raster.hpp"

namespace canopy {

// RSF container: a JSON header at `header_path` with keys
// {width, height, bands, band_names, cell_size_m, origin_x_m, origin_y_m, nodata}
// and a sibling `<stem>.bin` holding band-sequential little-endian float32
// values, row-major within each band.
std::filesystem::path rsf_data_path(const std::filesystem::path& header_path);

void write_rsf(const RasterStack& stack, const std::filesystem::path& header_path);
RasterStack read_rsf(const std::filesystem::path& header_path);

// Sparse labels as a two-band RSF (rh95_m, weight); unlabeled cells hold nodata.
void write_labels_rsf(const SparseLabelRaster& labels, const std::filesystem::path& header_path);
SparseLabelRaster read_labels_rsf(const std::filesystem::path& header_path);

}  // namespace canopy
