// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <queue>
#include <stdexcept>
#include <unordered_map>
#include <vector>

namespace wireseg {

struct PixelPoint {
  int row = 0;
  int col = 0;
};

struct ClusterParams {
  double eps = 3.0;         // pixel distance, inclusive
  int min_pts = 4;          // neighborhood size making a core point (self included)
  int min_cluster_size = 20;
  int keep_top_k = 0;       // 0 = keep all surviving clusters

  void validate() const {
    if (eps <= 0.0) throw std::invalid_argument("ClusterParams: eps must be > 0");
    if (min_pts < 1) throw std::invalid_argument("ClusterParams: min_pts must be >= 1");
    if (min_cluster_size < 1)
      throw std::invalid_argument("ClusterParams: min_cluster_size must be >= 1");
    if (keep_top_k < 0) throw std::invalid_argument("ClusterParams: keep_top_k must be >= 0");
  }
};

inline constexpr int kNoise = -1;

// Density-based clustering under Euclidean pixel distance. Core points have
// >= min_pts neighbors within eps (counting themselves); clusters are maximal
// density-connected sets; border points attach to the first discovered core's
// cluster; the rest are NOISE. Points are processed in input order, which
// pins the classical border-point ambiguity.
inline std::vector<int> dbscan(const std::vector<PixelPoint>& points, const ClusterParams& params) {
  params.validate();
  const size_t n = points.size();
  std::vector<int> labels(n, kNoise);
  if (n == 0) return labels;

  // Bucket grid with cell size >= eps so neighbors live in the 3x3 cell block.
  const int cell = std::max(1, static_cast<int>(std::ceil(params.eps)));
  std::unordered_map<int64_t, std::vector<uint32_t>> buckets;
  auto key = [cell](int r, int c) {
    const int64_t by = static_cast<int64_t>(std::floor(static_cast<double>(r) / cell));
    const int64_t bx = static_cast<int64_t>(std::floor(static_cast<double>(c) / cell));
    return (by << 32) ^ (bx & 0xffffffffLL);
  };
  buckets.reserve(n * 2);
  for (uint32_t i = 0; i < n; ++i) buckets[key(points[i].row, points[i].col)].push_back(i);

  const double eps2 = params.eps * params.eps;
  auto neighbors = [&](uint32_t i) {
    std::vector<uint32_t> out;
    const int r = points[i].row, c = points[i].col;
    const int b0r = static_cast<int>(std::floor(static_cast<double>(r - cell) / cell));
    const int b1r = static_cast<int>(std::floor(static_cast<double>(r + cell) / cell));
    const int b0c = static_cast<int>(std::floor(static_cast<double>(c - cell) / cell));
    const int b1c = static_cast<int>(std::floor(static_cast<double>(c + cell) / cell));
    for (int by = b0r; by <= b1r; ++by)
      for (int bx = b0c; bx <= b1c; ++bx) {
        auto it = buckets.find((static_cast<int64_t>(by) << 32) ^ (bx & 0xffffffffLL));
        if (it == buckets.end()) continue;
        for (uint32_t j : it->second) {
          const double dy = points[i].row - points[j].row;
          const double dx = points[i].col - points[j].col;
          if (dy * dy + dx * dx <= eps2) out.push_back(j);
        }
      }
    std::sort(out.begin(), out.end());
    return out;
  };

  std::vector<char> is_core(n, 0);
  for (uint32_t i = 0; i < n; ++i)
    is_core[i] = neighbors(i).size() >= static_cast<size_t>(params.min_pts);

  int next_cluster = 0;
  std::vector<char> enqueued(n, 0);
  for (uint32_t i = 0; i < n; ++i) {
    if (!is_core[i] || labels[i] != kNoise) continue;
    const int cid = next_cluster++;
    std::queue<uint32_t> frontier;
    frontier.push(i);
    enqueued[i] = 1;
    labels[i] = cid;
    while (!frontier.empty()) {
      const uint32_t p = frontier.front();
      frontier.pop();
      if (!is_core[p]) continue;
      for (uint32_t q : neighbors(p)) {
        if (labels[q] == kNoise) labels[q] = cid;
        if (is_core[q] && !enqueued[q]) {
          enqueued[q] = 1;
          frontier.push(q);
        }
      }
    }
  }
  return labels;
}

}  // namespace wireseg
