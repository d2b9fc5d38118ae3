#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "micas/pointcloud.hpp"

// Synthetic paired "input-target" generators standing in for a real
// point-cloud in-context benchmark.
namespace micas {

enum class TaskKind : std::uint8_t {
  Reconstruction = 0,
  Denoising = 1,
  Registration = 2,
  PartSeg = 3,
};

inline constexpr std::array<TaskKind, 4> kAllTasks = {
    TaskKind::Reconstruction, TaskKind::Denoising, TaskKind::Registration, TaskKind::PartSeg};
inline constexpr int kLevels = 5;

std::string_view task_name(TaskKind task);
TaskKind parse_task(std::string_view name);

enum class ShapeKind : std::uint8_t { Sphere, Box, Cylinder, Torus, Composite };

ShapeKind parse_shape(std::string_view name);

struct TaskPair {
  PointCloud input;
  PointCloud target;
  TaskKind task = TaskKind::Reconstruction;
  int level = 1;
  std::uint64_t seed = 0;
};

/// Per-level difficulty knobs (see level_params).
struct LevelParams {
  double outlier_fraction = 0.0;    // denoising
  double noise_sigma = 0.0;         // denoising
  double max_angle_deg = 0.0;       // registration
  double max_translation = 0.0;     // registration
  double collapse_radius = 0.0;     // reconstruction
  int part_count = 2;               // part segmentation
};

LevelParams level_params(TaskKind task, int level);

/// Uniform surface samples normalised into the unit cube by the shape's
/// analytic bounding box. Composite shapes carry `parts` labels.
PointCloud gen_shape(ShapeKind kind, Index count, Rng& rng, int parts = 2);

/// Pure function of (task, level, count, seed).
TaskPair gen_pair(TaskKind task, int level, Index count, std::uint64_t seed);

/// Part-segmentation targets: label l maps to vertex l of a regular
/// tetrahedron inscribed in the unit cube.
const std::array<Vec3, 4>& part_anchors();
std::vector<std::uint16_t> decode_part_labels(const Matrix& points);

// MICASDS1: magic, u32 pair count, then per pair u8 task, u8 level, u64 seed
// and two embedded MICASPC1 clouds (input, target).
void write_dataset(std::ostream& os, const std::vector<TaskPair>& pairs);
std::vector<TaskPair> read_dataset(std::istream& is);
void save_dataset(const std::filesystem::path& path, const std::vector<TaskPair>& pairs);
std::vector<TaskPair> load_dataset(const std::filesystem::path& path);

/// Same-task prompt pairs, indexed by TaskKind.
struct PromptBank {
  std::array<std::vector<TaskPair>, 4> per_task;

  const std::vector<TaskPair>& of(TaskKind task) const {
    return per_task[static_cast<std::size_t>(task)];
  }
  static PromptBank from_pairs(std::vector<TaskPair> pairs);
  std::vector<TaskPair> flatten() const;
};

}  // namespace micas
