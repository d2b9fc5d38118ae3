#include "micas/pointcloud.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "micas/error.hpp"

namespace micas {

void PointCloud::validate() const {
  require_domain(points.rows() >= 1, "point cloud is empty");
  require_domain(points.cols() == 3, "point cloud must have 3 columns");
  require_domain(points.allFinite(), "point cloud has non-finite coordinates");
  if (labels) {
    require_domain(static_cast<Index>(labels->size()) == size(),
                   "label count differs from point count");
  }
  if (noise_mask) {
    require_domain(static_cast<Index>(noise_mask->size()) == size(),
                   "noise mask length differs from point count");
  }
}

std::size_t PointCloud::flagged_count() const {
  if (!noise_mask) return 0;
  return static_cast<std::size_t>(
      std::count_if(noise_mask->begin(), noise_mask->end(),
                    [](std::uint8_t f) { return f != 0; }));
}

double chamfer_distance(const Matrix& a, const Matrix& b) {
  require_domain(a.rows() >= 1 && b.rows() >= 1, "chamfer distance of an empty set");
  require_domain(a.cols() == b.cols(), "chamfer distance: dimension mismatch");
  require_domain(a.allFinite() && b.allFinite(),
                 "chamfer distance: non-finite coordinate");

  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> best_b(static_cast<std::size_t>(b.rows()), inf);
  double sum_a = 0.0;
  for (Index i = 0; i < a.rows(); ++i) {
    double best = inf;
    for (Index j = 0; j < b.rows(); ++j) {
      const double d = (a.row(i) - b.row(j)).squaredNorm();
      best = std::min(best, d);
      auto& bj = best_b[static_cast<std::size_t>(j)];
      bj = std::min(bj, d);
    }
    sum_a += best;
  }
  const double sum_b = std::accumulate(best_b.begin(), best_b.end(), 0.0);
  return sum_a / static_cast<double>(a.rows()) +
         sum_b / static_cast<double>(b.rows());
}

std::vector<Index> fps_select(const PointCloud& cloud, Index count,
                              Index seed_index) {
  cloud.validate();
  const Index s = cloud.size();
  require_domain(count >= 1, "fps: count must be positive");
  require_domain(count <= s, "fps: count exceeds point count");
  require_domain(seed_index >= 0 && seed_index < s, "fps: seed index out of range");

  std::vector<Index> picked;
  picked.reserve(static_cast<std::size_t>(count));
  std::vector<double> min_dist(static_cast<std::size_t>(s),
                               std::numeric_limits<double>::infinity());
  std::vector<bool> taken(static_cast<std::size_t>(s), false);

  Index current = seed_index;
  for (;;) {
    picked.push_back(current);
    taken[static_cast<std::size_t>(current)] = true;
    if (static_cast<Index>(picked.size()) == count) break;

    Index next = -1;
    double next_dist = -1.0;
    for (Index i = 0; i < s; ++i) {
      auto& md = min_dist[static_cast<std::size_t>(i)];
      md = std::min(md, (cloud.points.row(i) - cloud.points.row(current)).squaredNorm());
      if (!taken[static_cast<std::size_t>(i)] && md > next_dist) {
        next_dist = md;
        next = i;
      }
    }
    current = next;
  }
  return picked;
}

PatchSet knn_patches(const PointCloud& cloud, const Matrix& centers, Index m) {
  cloud.validate();
  const Index s = cloud.size();
  require_domain(m >= 1 && m <= s, "knn: neighbour count must be in [1, S]");
  require_domain(centers.cols() == 3, "knn: centers must have 3 columns");
  require_domain(centers.allFinite(), "knn: non-finite center");

  PatchSet out;
  out.centers = centers;
  out.patches.reserve(static_cast<std::size_t>(centers.rows()));
  out.source_indices.reserve(static_cast<std::size_t>(centers.rows()));

  std::vector<Index> order(static_cast<std::size_t>(s));
  std::vector<double> dist(static_cast<std::size_t>(s));
  for (Index c = 0; c < centers.rows(); ++c) {
    for (Index i = 0; i < s; ++i) {
      dist[static_cast<std::size_t>(i)] = (cloud.points.row(i) - centers.row(c)).squaredNorm();
    }
    std::iota(order.begin(), order.end(), Index{0});
    std::partial_sort(order.begin(), order.begin() + m, order.end(),
                      [&](Index l, Index r) {
                        const double dl = dist[static_cast<std::size_t>(l)];
                        const double dr = dist[static_cast<std::size_t>(r)];
                        return dl < dr || (dl == dr && l < r);
                      });
    Matrix patch(m, 3);
    std::vector<Index> idx(order.begin(), order.begin() + m);
    for (Index j = 0; j < m; ++j) patch.row(j) = cloud.points.row(idx[static_cast<std::size_t>(j)]);
    out.patches.push_back(std::move(patch));
    out.source_indices.push_back(std::move(idx));
  }
  return out;
}

Matrix joint_sample_hard(const PointCloud& target, std::span<const Index> indices) {
  target.validate();
  Matrix out(static_cast<Index>(indices.size()), 3);
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const Index i = indices[k];
    require_domain(i >= 0 && i < target.size(), "joint sampling: index out of range");
    out.row(static_cast<Index>(k)) = target.points.row(i);
  }
  return out;
}

Matrix joint_sample_soft(const PointCloud& target, const Matrix& weights) {
  target.validate();
  require_domain(weights.rows() == target.size(),
                 "joint sampling: weight rows differ from point count");
  for (Index j = 0; j < weights.cols(); ++j) {
    require_domain(std::abs(weights.col(j).sum() - 1.0) <= 1e-6,
                   "joint sampling: weight column is not stochastic");
  }
  return weights.transpose() * target.points;
}

double minmax_normalize(double value, double lo, double hi) {
  require_domain(hi > lo, "minmax_normalize: hi must exceed lo");
  require_domain(std::isfinite(value), "minmax_normalize: non-finite value");
  return std::clamp((value - lo) / (hi - lo), 0.0, 1.0);
}

double miou(std::span<const std::uint16_t> pred, std::span<const std::uint16_t> gt,
            int part_count) {
  require_domain(pred.size() == gt.size(), "miou: length mismatch");
  require_domain(part_count >= 1, "miou: part count must be positive");
  const auto parts = static_cast<std::size_t>(part_count);
  std::vector<std::size_t> inter(parts, 0), uni(parts, 0);
  std::vector<bool> present(parts, false);
  for (std::size_t i = 0; i < gt.size(); ++i) {
    require_domain(pred[i] < parts && gt[i] < parts, "miou: label out of range");
    present[gt[i]] = true;
    if (pred[i] == gt[i]) {
      ++inter[gt[i]];
      ++uni[gt[i]];
    } else {
      ++uni[gt[i]];
      ++uni[pred[i]];
    }
  }
  double total = 0.0;
  int counted = 0;
  for (std::size_t l = 0; l < parts; ++l) {
    if (!present[l]) continue;
    total += static_cast<double>(inter[l]) / static_cast<double>(uni[l]);
    ++counted;
  }
  return counted == 0 ? 0.0 : total / counted;
}

PointCloud rigid_transform(const PointCloud& cloud, const Rotation& rotation,
                           const Vec3& translation) {
  cloud.validate();
  const double orth_err =
      (rotation.transpose() * rotation - Rotation::Identity()).cwiseAbs().maxCoeff();
  require_domain(orth_err <= 1e-9, "rigid_transform: rotation is not orthonormal");
  require_domain(std::abs(rotation.determinant() - 1.0) <= 1e-9,
                 "rigid_transform: rotation determinant is not +1");

  PointCloud out = cloud;
  out.points = (cloud.points * rotation.transpose()).rowwise() + translation.transpose();
  return out;
}

PointCloud corrupt(const PointCloud& cloud, double outlier_fraction, double sigma,
                   Rng& rng) {
  cloud.validate();
  require_domain(outlier_fraction >= 0.0 && outlier_fraction <= 1.0,
                 "corrupt: outlier fraction must lie in [0, 1]");
  require_domain(sigma >= 0.0, "corrupt: sigma must be nonnegative");

  const Index s = cloud.size();
  const auto flagged = static_cast<Index>(std::llround(outlier_fraction * static_cast<double>(s)));
  std::vector<Index> order(static_cast<std::size_t>(s));
  std::iota(order.begin(), order.end(), Index{0});
  std::shuffle(order.begin(), order.end(), rng);

  PointCloud out = cloud;
  out.noise_mask = std::vector<std::uint8_t>(static_cast<std::size_t>(s), 0);
  for (Index k = 0; k < flagged; ++k) (*out.noise_mask)[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])] = 1;

  std::normal_distribution<double> gauss(0.0, 1.0);
  for (Index i = 0; i < s; ++i) {
    if ((*out.noise_mask)[static_cast<std::size_t>(i)]) {
      for (int d = 0; d < 3; ++d) out.points(i, d) = uniform_open01(rng);
    } else {
      for (int d = 0; d < 3; ++d) out.points(i, d) += sigma * gauss(rng);
    }
  }
  return out;
}

std::pair<Vec3, Vec3> bounding_box(const Matrix& points) {
  require_domain(points.rows() >= 1 && points.cols() == 3, "bounding box of an empty set");
  return {points.colwise().minCoeff().transpose(), points.colwise().maxCoeff().transpose()};
}

}  // namespace micas
