// Copyright mgrecon authors. Apache 2.0 License.
#pragma once

#include <algorithm>
#include <cstdint>
#include <unordered_map>
#include <vector>

#include "mgrecon/cloud.hpp"

namespace mgrecon {

// Uniform hash grid over cloud points with cell size equal to the query
// radius, so any strict-radius neighborhood lies within the 27 cells around
// a point. Build once (single writer), then query concurrently.
class SpatialGrid {
public:
  SpatialGrid(const PointCloud& cloud, double cell) : cloud_(cloud), cell_(cell) {
    cells_.reserve(cloud.size());
    for (size_t k = 0; k < cloud.size(); ++k)
      cells_[key_of(cloud[k].p)].push_back(static_cast<int32_t>(k));
  }

  // Indices of points with |p - center| < radius (strict), ascending.
  // cap < 0 means uncapped.
  std::vector<int32_t> query(const Vec3& center, double radius,
                             int64_t cap = -1) const {
    std::vector<int32_t> out;
    double r2 = radius * radius;
    visit_neighborhood(center, [&](int32_t idx) {
      if ((cloud_[idx].p - center).squaredNorm() < r2) out.push_back(idx);
      return true;
    });
    std::sort(out.begin(), out.end());
    if (cap >= 0 && static_cast<int64_t>(out.size()) > cap) out.resize(cap);
    return out;
  }

  // True if at least n_min points lie strictly within radius of center
  // (early exit once the count is reached).
  bool count_at_least(const Vec3& center, double radius, int64_t n_min) const {
    double r2 = radius * radius;
    int64_t count = 0;
    bool reached = false;
    visit_neighborhood(center, [&](int32_t idx) {
      if ((cloud_[idx].p - center).squaredNorm() < r2) {
        if (++count >= n_min) {
          reached = true;
          return false;
        }
      }
      return true;
    });
    return reached;
  }

  bool any_within(const Vec3& center, double radius) const {
    return count_at_least(center, radius, 1);
  }

private:
  static constexpr int64_t kBias = 1 << 20;

  int64_t key_of(const Vec3& p) const {
    auto cc = [&](double v) {
      return static_cast<int64_t>(std::floor(v / cell_)) + kBias;
    };
    return (cc(p.x()) << 42) | (cc(p.y()) << 21) | cc(p.z());
  }

  template <typename Fn>
  void visit_neighborhood(const Vec3& center, Fn&& fn) const {
    auto cc = [&](double v) {
      return static_cast<int64_t>(std::floor(v / cell_)) + kBias;
    };
    int64_t cx = cc(center.x()), cy = cc(center.y()), cz = cc(center.z());
    for (int64_t dx = -1; dx <= 1; ++dx)
      for (int64_t dy = -1; dy <= 1; ++dy)
        for (int64_t dz = -1; dz <= 1; ++dz) {
          auto it = cells_.find(((cx + dx) << 42) | ((cy + dy) << 21) |
                                (cz + dz));
          if (it == cells_.end()) continue;
          for (int32_t idx : it->second)
            if (!fn(idx)) return;
        }
  }

  const PointCloud& cloud_;
  double cell_;
  std::unordered_map<int64_t, std::vector<int32_t>> cells_;
};

} // namespace mgrecon
