#pragma once

// Independent reference implementations used by the tests. Deliberately
// naive: nested loops over plain arrays, no shared code with the library.

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include "micas/pointcloud.hpp"

namespace oracle {

inline double sqdist(const micas::Matrix& a, micas::Index i, const micas::Matrix& b, micas::Index j) {
  double s = 0.0;
  for (int k = 0; k < 3; ++k) {
    const double d = a(i, k) - b(j, k);
    s += d * d;
  }
  return s;
}

inline double chamfer(const micas::Matrix& a, const micas::Matrix& b) {
  double ab = 0.0, ba = 0.0;
  for (micas::Index i = 0; i < a.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (micas::Index j = 0; j < b.rows(); ++j) best = std::min(best, sqdist(a, i, b, j));
    ab += best;
  }
  for (micas::Index j = 0; j < b.rows(); ++j) {
    double best = std::numeric_limits<double>::infinity();
    for (micas::Index i = 0; i < a.rows(); ++i) best = std::min(best, sqdist(b, j, a, i));
    ba += best;
  }
  return ab / static_cast<double>(a.rows()) + ba / static_cast<double>(b.rows());
}

/// Min squared distance from point i to the chosen set.
inline double dist_to_set(const micas::Matrix& p, micas::Index i, const std::vector<micas::Index>& chosen) {
  double best = std::numeric_limits<double>::infinity();
  for (auto c : chosen) best = std::min(best, sqdist(p, i, p, c));
  return best;
}

/// True when every pick after the first maximises the min distance to the
/// picks before it (checked against every candidate).
inline bool fps_greedy_optimal(const micas::Matrix& p, const std::vector<micas::Index>& picks) {
  for (std::size_t k = 1; k < picks.size(); ++k) {
    std::vector<micas::Index> before(picks.begin(), picks.begin() + static_cast<std::ptrdiff_t>(k));
    const double got = dist_to_set(p, picks[k], before);
    for (micas::Index c = 0; c < p.rows(); ++c) {
      if (std::find(before.begin(), before.end(), c) != before.end()) continue;
      if (dist_to_set(p, c, before) > got) return false;
    }
  }
  return true;
}

/// Indices of the m nearest rows of p to point q, ties by index.
inline std::vector<micas::Index> knn(const micas::Matrix& p, const micas::Matrix& q, micas::Index qi, micas::Index m) {
  std::vector<std::pair<double, micas::Index>> all;
  for (micas::Index i = 0; i < p.rows(); ++i) all.emplace_back(sqdist(p, i, q, qi), i);
  std::sort(all.begin(), all.end());
  std::vector<micas::Index> out;
  for (micas::Index k = 0; k < m; ++k) out.push_back(all[static_cast<std::size_t>(k)].second);
  return out;
}

inline micas::Matrix random_points(micas::Index n, micas::Rng& rng) {
  micas::Matrix p(n, 3);
  for (micas::Index i = 0; i < n; ++i)
    for (int k = 0; k < 3; ++k) p(i, k) = micas::uniform(rng, -1.0, 1.0);
  return p;
}

}  // namespace oracle
