#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "micas/random.hpp"

namespace micas {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vec3 = Eigen::Vector3d;

/// An ordered set of S points (S x 3), optionally labeled per point and
/// optionally carrying a mask of injected outliers.
struct PointCloud {
  Matrix points;  // S x 3
  std::optional<std::vector<std::uint16_t>> labels;
  std::optional<std::vector<std::uint8_t>> noise_mask;

  PointCloud() : points(0, 3) {}
  explicit PointCloud(Matrix pts) : points(std::move(pts)) {}

  Index size() const { return points.rows(); }

  /// Throws a domain error unless the cloud is nonempty, finite, S x 3 and the
  /// optional per-point arrays match S.
  void validate() const;

  std::size_t flagged_count() const;
};

/// N neighbourhoods of M points each, built around N centers.
struct PatchSet {
  Matrix centers;                // N x 3
  std::vector<Matrix> patches;   // N entries of M x 3
  std::vector<std::vector<Index>> source_indices;  // empty, or N x M

  Index count() const { return static_cast<Index>(patches.size()); }
  Index patch_size() const { return patches.empty() ? 0 : patches.front().rows(); }
};

/// Symmetric Chamfer distance with squared Euclidean terms. Rows are points.
double chamfer_distance(const Matrix& a, const Matrix& b);

/// Greedy farthest-point selection starting at `seed_index`; ties go to the
/// lowest point index.
std::vector<Index> fps_select(const PointCloud& cloud, Index count,
                              Index seed_index = 0);

/// The M nearest points of `cloud` to every row of `centers`, ordered by
/// distance then index.
PatchSet knn_patches(const PointCloud& cloud, const Matrix& centers, Index m);

Matrix joint_sample_hard(const PointCloud& target, std::span<const Index> indices);

/// weights is S x N with stochastic columns; returns weights^T * target.
Matrix joint_sample_soft(const PointCloud& target, const Matrix& weights);

double minmax_normalize(double value, double lo, double hi);

double miou(std::span<const std::uint16_t> pred,
            std::span<const std::uint16_t> gt, int part_count);

using Rotation = Eigen::Matrix3d;

PointCloud rigid_transform(const PointCloud& cloud, const Rotation& rotation,
                           const Vec3& translation);

/// Replaces round(fraction * S) points by uniform unit-cube samples (flagged in
/// noise_mask) and jitters the rest with N(0, sigma^2) per coordinate.
PointCloud corrupt(const PointCloud& cloud, double outlier_fraction,
                   double sigma, Rng& rng);

/// Per-axis bounding box (min row, max row).
std::pair<Vec3, Vec3> bounding_box(const Matrix& points);

}  // namespace micas
