#pragma once

#include <filesystem>
#include <iosfwd>

#include "micas/pointcloud.hpp"

namespace micas {

// MICASPC1 layout: magic, u32 S, u8 has_labels, u8 has_mask, S*3 f64
// coordinates (row-major), optional S u16 labels, optional S u8 mask.
void write_cloud(std::ostream& os, const PointCloud& cloud);
PointCloud read_cloud(std::istream& is);

void save_cloud(const std::filesystem::path& path, const PointCloud& cloud);
PointCloud load_cloud(const std::filesystem::path& path);

/// Plain-text import: one "x y z [label]" per line; blank lines and lines
/// starting with '#' are skipped. Labels must be given on all lines or none.
PointCloud import_xyz(std::istream& is);
PointCloud import_xyz(const std::filesystem::path& path);

}  // namespace micas
