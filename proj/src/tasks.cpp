#include "micas/tasks.hpp"

#include <Eigen/Geometry>

#include <cmath>
#include <fstream>
#include <numbers>

#include "micas/binary_io.hpp"
#include "micas/cloud_io.hpp"
#include "micas/error.hpp"

namespace micas {

std::string_view task_name(TaskKind task) {
  switch (task) {
    case TaskKind::Reconstruction: return "reconstruction";
    case TaskKind::Denoising: return "denoising";
    case TaskKind::Registration: return "registration";
    case TaskKind::PartSeg: return "partseg";
  }
  return "unknown";
}

TaskKind parse_task(std::string_view name) {
  for (auto t : kAllTasks)
    if (task_name(t) == name) return t;
  fail(ErrorKind::Domain, "unknown task: " + std::string(name));
}

ShapeKind parse_shape(std::string_view name) {
  if (name == "sphere") return ShapeKind::Sphere;
  if (name == "box") return ShapeKind::Box;
  if (name == "cylinder") return ShapeKind::Cylinder;
  if (name == "torus") return ShapeKind::Torus;
  if (name == "composite") return ShapeKind::Composite;
  fail(ErrorKind::Domain, "unknown shape kind: " + std::string(name));
}

LevelParams level_params(TaskKind task, int level) {
  require_domain(level >= 1 && level <= kLevels, "difficulty level must be in 1..5");
  static constexpr double kOutlier[] = {0.05, 0.10, 0.15, 0.20, 0.25};
  static constexpr double kSigma[] = {0.005, 0.01, 0.015, 0.02, 0.025};
  static constexpr double kAngle[] = {15.0, 30.0, 60.0, 90.0, 180.0};
  static constexpr double kCollapse[] = {0.1, 0.15, 0.2, 0.25, 0.3};
  static constexpr int kParts[] = {2, 2, 3, 3, 4};
  const auto i = static_cast<std::size_t>(level - 1);
  LevelParams p;
  switch (task) {
    case TaskKind::Denoising:
      p.outlier_fraction = kOutlier[i];
      p.noise_sigma = kSigma[i];
      break;
    case TaskKind::Registration:
      p.max_angle_deg = kAngle[i];
      p.max_translation = 0.1 * level;
      break;
    case TaskKind::Reconstruction: p.collapse_radius = kCollapse[i]; break;
    case TaskKind::PartSeg: p.part_count = kParts[i]; break;
  }
  return p;
}

namespace {

struct RawShape {
  Matrix points;
  Vec3 lo, hi;  // analytic bounding box
  std::vector<std::uint16_t> labels;
};

Vec3 unit_direction(Rng& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (;;) {
    Vec3 v(gauss(rng), gauss(rng), gauss(rng));
    const double n = v.norm();
    if (n > 1e-12) return v / n;
  }
}

Vec3 box_surface_point(const Vec3& half, Rng& rng) {
  // faces perpendicular to x, y, z with areas proportional to the other two extents
  const double ax = half.y() * half.z(), ay = half.x() * half.z(), az = half.x() * half.y();
  const double pick = uniform_open01(rng) * (ax + ay + az);
  const int axis = pick < ax ? 0 : (pick < ax + ay ? 1 : 2);
  Vec3 p;
  for (int d = 0; d < 3; ++d) p[d] = uniform(rng, -half[d], half[d]);
  p[axis] = uniform_open01(rng) < 0.5 ? -half[axis] : half[axis];
  return p;
}

RawShape sphere(Index count, Rng& rng, double radius = 1.0, const Vec3& center = Vec3::Zero()) {
  RawShape s{Matrix(count, 3), center.array() - radius, center.array() + radius, {}};
  for (Index i = 0; i < count; ++i) s.points.row(i) = (center + radius * unit_direction(rng)).transpose();
  return s;
}

RawShape box(Index count, Rng& rng, const Vec3& half, const Vec3& center = Vec3::Zero()) {
  RawShape s{Matrix(count, 3), center - half, center + half, {}};
  for (Index i = 0; i < count; ++i) s.points.row(i) = (center + box_surface_point(half, rng)).transpose();
  return s;
}

RawShape cylinder(Index count, Rng& rng) {
  const double r = uniform(rng, 0.4, 1.0);
  const double h = uniform(rng, 0.5, 1.0);
  RawShape s{Matrix(count, 3), Vec3(-r, -r, -h), Vec3(r, r, h), {}};
  const double lateral = 2.0 * std::numbers::pi * r * 2.0 * h;
  const double caps = 2.0 * std::numbers::pi * r * r;
  for (Index i = 0; i < count; ++i) {
    const double theta = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    if (uniform_open01(rng) * (lateral + caps) < lateral) {
      s.points.row(i) << r * std::cos(theta), r * std::sin(theta), uniform(rng, -h, h);
    } else {
      const double rho = r * std::sqrt(uniform_open01(rng));
      const double z = uniform_open01(rng) < 0.5 ? -h : h;
      s.points.row(i) << rho * std::cos(theta), rho * std::sin(theta), z;
    }
  }
  return s;
}

RawShape torus(Index count, Rng& rng) {
  const double big = 1.0;
  const double small = uniform(rng, 0.2, 0.45);
  RawShape s{Matrix(count, 3), Vec3(-(big + small), -(big + small), -small),
             Vec3(big + small, big + small, small), {}};
  for (Index i = 0; i < count;) {
    const double u = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    const double v = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    // accept with probability proportional to the area element
    if (uniform_open01(rng) * (big + small) > big + small * std::cos(v)) continue;
    const double ring = big + small * std::cos(v);
    s.points.row(i) << ring * std::cos(u), ring * std::sin(u), small * std::sin(v);
    ++i;
  }
  return s;
}

RawShape composite(Index count, Rng& rng, int parts) {
  require_domain(parts >= 2 && parts <= 4, "composite shapes have 2 to 4 parts");
  RawShape s{Matrix(count, 3), Vec3::Constant(1e300), Vec3::Constant(-1e300), {}};
  s.labels.resize(static_cast<std::size_t>(count));
  Index row = 0;
  double cursor = 0.0;
  for (int k = 0; k < parts; ++k) {
    const Index share = count / parts + (k < count % parts ? 1 : 0);
    RawShape part;
    if (uniform_open01(rng) < 0.5) {
      const double r = uniform(rng, 0.4, 0.7);
      part = sphere(share, rng, r, Vec3(cursor + r, 0.0, 0.0));
      cursor += 2.0 * r;
    } else {
      const Vec3 half(uniform(rng, 0.3, 0.6), uniform(rng, 0.3, 0.6), uniform(rng, 0.3, 0.6));
      part = box(share, rng, half, Vec3(cursor + half.x(), 0.0, 0.0));
      cursor += 2.0 * half.x();
    }
    s.points.middleRows(row, share) = part.points;
    for (Index i = 0; i < share; ++i) s.labels[static_cast<std::size_t>(row + i)] = static_cast<std::uint16_t>(k);
    s.lo = s.lo.cwiseMin(part.lo);
    s.hi = s.hi.cwiseMax(part.hi);
    row += share;
  }
  return s;
}

PointCloud normalise(RawShape raw) {
  const Vec3 center = 0.5 * (raw.lo + raw.hi);
  const double extent = (raw.hi - raw.lo).maxCoeff();
  PointCloud cloud(((raw.points.rowwise() - center.transpose()) / extent).array() + 0.5);
  if (!raw.labels.empty()) cloud.labels = std::move(raw.labels);
  return cloud;
}

}  // namespace

PointCloud gen_shape(ShapeKind kind, Index count, Rng& rng, int parts) {
  require_domain(count >= 8, "shapes need at least 8 points");
  switch (kind) {
    case ShapeKind::Sphere: return normalise(sphere(count, rng));
    case ShapeKind::Box: {
      const Vec3 half(uniform(rng, 0.5, 1.0), uniform(rng, 0.5, 1.0), uniform(rng, 0.5, 1.0));
      return normalise(box(count, rng, half));
    }
    case ShapeKind::Cylinder: return normalise(cylinder(count, rng));
    case ShapeKind::Torus: return normalise(torus(count, rng));
    case ShapeKind::Composite: return normalise(composite(count, rng, parts));
  }
  fail(ErrorKind::Domain, "unknown shape kind");
}

const std::array<Vec3, 4>& part_anchors() {
  static const std::array<Vec3, 4> anchors = {Vec3(0, 0, 0), Vec3(1, 1, 0), Vec3(1, 0, 1),
                                              Vec3(0, 1, 1)};
  return anchors;
}

std::vector<std::uint16_t> decode_part_labels(const Matrix& points) {
  const auto& anchors = part_anchors();
  std::vector<std::uint16_t> labels(static_cast<std::size_t>(points.rows()));
  for (Index i = 0; i < points.rows(); ++i) {
    std::size_t best = 0;
    double best_d = (points.row(i).transpose() - anchors[0]).squaredNorm();
    for (std::size_t a = 1; a < anchors.size(); ++a) {
      const double d = (points.row(i).transpose() - anchors[a]).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = a;
      }
    }
    labels[static_cast<std::size_t>(i)] = static_cast<std::uint16_t>(best);
  }
  return labels;
}

TaskPair gen_pair(TaskKind task, int level, Index count, std::uint64_t seed) {
  const LevelParams lp = level_params(task, level);
  Rng rng(seed);
  TaskPair pair;
  pair.task = task;
  pair.level = level;
  pair.seed = seed;

  auto random_simple_shape = [&]() {
    const auto kind = static_cast<ShapeKind>(rng() % 4);
    return gen_shape(kind, count, rng);
  };

  switch (task) {
    case TaskKind::Reconstruction: {
      PointCloud clean = random_simple_shape();
      PointCloud sparse = clean;
      const Index anchor = static_cast<Index>(rng() % static_cast<std::uint64_t>(count));
      const Vec3 c = clean.points.row(anchor).transpose();
      const double radius = lp.collapse_radius;
      for (Index i = 0; i < count; ++i) {
        const Vec3 p = clean.points.row(i).transpose();
        const double d = (p - c).norm();
        if (d < radius && d > 0.0) sparse.points.row(i) = (c + radius * (p - c) / d).transpose();
      }
      pair.input = std::move(sparse);
      pair.target = std::move(clean);
      break;
    }
    case TaskKind::Denoising: {
      PointCloud clean = random_simple_shape();
      pair.input = corrupt(clean, lp.outlier_fraction, lp.noise_sigma, rng);
      clean.noise_mask = pair.input.noise_mask;
      pair.target = std::move(clean);
      break;
    }
    case TaskKind::Registration: {
      PointCloud clean = random_simple_shape();
      const double max_angle = lp.max_angle_deg * std::numbers::pi / 180.0;
      const Vec3 axis = unit_direction(rng);
      const double angle = uniform(rng, -max_angle, max_angle);
      const Rotation rot = Eigen::AngleAxisd(angle, axis).toRotationMatrix();
      const Vec3 shift = unit_direction(rng) * uniform(rng, 0.0, lp.max_translation);
      pair.target = rigid_transform(clean, rot, shift);
      pair.input = std::move(clean);
      break;
    }
    case TaskKind::PartSeg: {
      PointCloud shape = gen_shape(ShapeKind::Composite, count, rng, lp.part_count);
      PointCloud target(Matrix(count, 3));
      const auto& anchors = part_anchors();
      for (Index i = 0; i < count; ++i)
        target.points.row(i) = anchors[(*shape.labels)[static_cast<std::size_t>(i)]].transpose();
      target.labels = shape.labels;
      pair.input = std::move(shape);
      pair.target = std::move(target);
      break;
    }
  }
  return pair;
}

namespace {
constexpr std::string_view kDatasetMagic = "MICASDS1";
}

void write_dataset(std::ostream& os, const std::vector<TaskPair>& pairs) {
  binary::put_magic(os, kDatasetMagic);
  binary::put<std::uint32_t>(os, static_cast<std::uint32_t>(pairs.size()));
  for (const auto& p : pairs) {
    binary::put<std::uint8_t>(os, static_cast<std::uint8_t>(p.task));
    binary::put<std::uint8_t>(os, static_cast<std::uint8_t>(p.level));
    binary::put<std::uint64_t>(os, p.seed);
    write_cloud(os, p.input);
    write_cloud(os, p.target);
  }
}

std::vector<TaskPair> read_dataset(std::istream& is) {
  binary::expect_magic(is, kDatasetMagic);
  const auto count = binary::get<std::uint32_t>(is);
  std::vector<TaskPair> pairs;
  pairs.reserve(std::min<std::uint32_t>(count, 1u << 16));
  for (std::uint32_t k = 0; k < count; ++k) {
    TaskPair p;
    const auto task = binary::get<std::uint8_t>(is);
    if (task > 3) fail(ErrorKind::Format, "unknown task id in dataset");
    p.task = static_cast<TaskKind>(task);
    p.level = binary::get<std::uint8_t>(is);
    if (p.level < 1 || p.level > kLevels) fail(ErrorKind::Format, "bad level in dataset");
    p.seed = binary::get<std::uint64_t>(is);
    p.input = read_cloud(is);
    p.target = read_cloud(is);
    if (p.input.size() != p.target.size())
      fail(ErrorKind::Format, "dataset pair with mismatched point counts");
    pairs.push_back(std::move(p));
  }
  if (is.peek() != std::char_traits<char>::eof()) fail(ErrorKind::Format, "trailing bytes in dataset");
  return pairs;
}

void save_dataset(const std::filesystem::path& path, const std::vector<TaskPair>& pairs) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) fail(ErrorKind::Io, "cannot open for writing: " + path.string());
  write_dataset(os, pairs);
  if (!os) fail(ErrorKind::Io, "write failed: " + path.string());
}

std::vector<TaskPair> load_dataset(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::Io, "cannot open for reading: " + path.string());
  return read_dataset(is);
}

PromptBank PromptBank::from_pairs(std::vector<TaskPair> pairs) {
  PromptBank bank;
  for (auto& p : pairs) bank.per_task[static_cast<std::size_t>(p.task)].push_back(std::move(p));
  return bank;
}

std::vector<TaskPair> PromptBank::flatten() const {
  std::vector<TaskPair> out;
  for (const auto& v : per_task) out.insert(out.end(), v.begin(), v.end());
  return out;
}

}  // namespace micas
