#include "micas/cloud_io.hpp"

#include <fstream>
#include <sstream>
#include <string>

#include "micas/binary_io.hpp"

namespace micas {

namespace {
constexpr std::string_view kCloudMagic = "MICASPC1";
}

void write_cloud(std::ostream& os, const PointCloud& cloud) {
  cloud.validate();
  binary::put_magic(os, kCloudMagic);
  binary::put<std::uint32_t>(os, static_cast<std::uint32_t>(cloud.size()));
  binary::put<std::uint8_t>(os, cloud.labels ? 1 : 0);
  binary::put<std::uint8_t>(os, cloud.noise_mask ? 1 : 0);
  for (Index i = 0; i < cloud.size(); ++i)
    for (Index d = 0; d < 3; ++d) binary::put<double>(os, cloud.points(i, d));
  if (cloud.labels)
    for (auto l : *cloud.labels) binary::put<std::uint16_t>(os, l);
  if (cloud.noise_mask)
    for (auto m : *cloud.noise_mask) binary::put<std::uint8_t>(os, m);
}

PointCloud read_cloud(std::istream& is) {
  binary::expect_magic(is, kCloudMagic);
  const auto s = binary::get<std::uint32_t>(is);
  const auto has_labels = binary::get<std::uint8_t>(is);
  const auto has_mask = binary::get<std::uint8_t>(is);
  if (s == 0) fail(ErrorKind::Format, "cloud with zero points");
  if (has_labels > 1 || has_mask > 1) fail(ErrorKind::Format, "bad cloud flags");

  PointCloud cloud(Matrix(static_cast<Index>(s), 3));
  for (Index i = 0; i < cloud.size(); ++i)
    for (Index d = 0; d < 3; ++d) cloud.points(i, d) = binary::get<double>(is);
  if (has_labels) {
    cloud.labels.emplace(s);
    for (auto& l : *cloud.labels) l = binary::get<std::uint16_t>(is);
  }
  if (has_mask) {
    cloud.noise_mask.emplace(s);
    for (auto& m : *cloud.noise_mask) m = binary::get<std::uint8_t>(is);
  }
  if (!cloud.points.allFinite()) fail(ErrorKind::Format, "cloud has non-finite coordinates");
  return cloud;
}

void save_cloud(const std::filesystem::path& path, const PointCloud& cloud) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) fail(ErrorKind::Io, "cannot open for writing: " + path.string());
  write_cloud(os, cloud);
  if (!os) fail(ErrorKind::Io, "write failed: " + path.string());
}

PointCloud load_cloud(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::Io, "cannot open for reading: " + path.string());
  return read_cloud(is);
}

PointCloud import_xyz(std::istream& is) {
  std::vector<std::array<double, 3>> pts;
  std::vector<std::uint16_t> labels;
  std::optional<bool> labeled;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line);
    std::array<double, 3> p{};
    if (!(ls >> p[0] >> p[1] >> p[2]))
      fail(ErrorKind::Format, "xyz: malformed line " + std::to_string(line_no));
    long label = -1;
    const bool has_label = static_cast<bool>(ls >> label);
    if (!labeled) labeled = has_label;
    if (*labeled != has_label)
      fail(ErrorKind::Format, "xyz: inconsistent label column at line " + std::to_string(line_no));
    if (has_label) {
      if (label < 0 || label > 0xffff)
        fail(ErrorKind::Format, "xyz: label out of range at line " + std::to_string(line_no));
      labels.push_back(static_cast<std::uint16_t>(label));
    }
    pts.push_back(p);
  }
  if (pts.empty()) fail(ErrorKind::Format, "xyz: no points");

  PointCloud cloud(Matrix(static_cast<Index>(pts.size()), 3));
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (int d = 0; d < 3; ++d) cloud.points(static_cast<Index>(i), d) = pts[i][static_cast<std::size_t>(d)];
  if (labeled && *labeled) cloud.labels = std::move(labels);
  if (!cloud.points.allFinite()) fail(ErrorKind::Format, "xyz: non-finite coordinate");
  return cloud;
}

PointCloud import_xyz(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) fail(ErrorKind::Io, "cannot open for reading: " + path.string());
  return import_xyz(is);
}

}  // namespace micas
