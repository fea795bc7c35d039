// Copyright mgrecon authors. Apache 2.0 License.
#include "mgrecon/fusion.hpp"

#include <cmath>
#include <unordered_set>

#include "mgrecon/errors.hpp"
#include "mgrecon/parallel.hpp"
#include "mgrecon/spatial_grid.hpp"

namespace mgrecon {

MaskImage valid_mask(int view, const std::vector<CorrespondenceSet>& sets,
                     const ConfidenceMap& chat, const MaskImage& seg,
                     double tau_C) {
  if (chat.width() != seg.width() || chat.height() != seg.height())
    throw DimensionMismatch("valid_mask: confidence/segmentation shape mismatch");
  MaskImage matched(chat.width(), chat.height(), 0);
  auto mark = [&](const Vec2& x) {
    int px = static_cast<int>(std::lround(x.x()));
    int py = static_cast<int>(std::lround(x.y()));
    if (matched.in_bounds(px, py)) matched.at(px, py) = 1;
  };
  for (const auto& set : sets) {
    if (set.i == view)
      for (const auto& m : set.matches) mark(m.xi);
    else if (set.j == view)
      for (const auto& m : set.matches) mark(m.xj);
  }
  MaskImage out(chat.width(), chat.height(), 0);
  for (size_t k = 0; k < out.size(); ++k)
    out[k] = (matched[k] && chat[k] > tau_C && seg[k] == 1) ? 1 : 0;
  return out;
}

PointCloud fuse(const std::vector<FusionViewInput>& views) {
  PointCloud cloud;
  for (size_t v = 0; v < views.size(); ++v) {
    const auto& view = views[v];
    const DepthMap& depth = *view.depth;
    if (view.valid->width() != depth.width() ||
        view.valid->height() != depth.height() ||
        view.rgb->width() != depth.width() ||
        view.rgb->height() != depth.height())
      throw DimensionMismatch("fuse: raster shape mismatch");
    for (int y = 0; y < depth.height(); ++y) {
      for (int x = 0; x < depth.width(); ++x) {
        if (!view.valid->at(x, y)) continue;
        double z = depth.at(x, y);
        if (!depth_valid(z)) continue;
        CloudPoint pt;
        pt.p = unproject(Vec2(x, y), z, view.K, view.pose);
        pt.r = view.rgb->r.at(x, y);
        pt.g = view.rgb->g.at(x, y);
        pt.b = view.rgb->b.at(x, y);
        pt.view = static_cast<int32_t>(v);
        pt.px = x;
        pt.py = y;
        cloud.push_back(pt);
      }
    }
  }
  return cloud;
}

PointCloud radius_filter(const PointCloud& cloud, double r, int64_t n_min) {
  if (cloud.empty()) return {};
  SpatialGrid grid(cloud, r);
  std::vector<uint8_t> keep(cloud.size(), 0);
  parallel_for(cloud.size(), [&](size_t lo, size_t hi) {
    for (size_t k = lo; k < hi; ++k)
      keep[k] = grid.count_at_least(cloud[k].p, r, n_min) ? 1 : 0;
  });
  PointCloud out;
  out.reserve(cloud.size());
  for (size_t k = 0; k < cloud.size(); ++k)
    if (keep[k]) out.push_back(cloud[k]);
  return out;
}

PointCloud voxel_downsample(const PointCloud& cloud, double voxel) {
  if (!(voxel > 0.0)) return cloud;
  std::unordered_set<int64_t> seen;
  PointCloud out;
  constexpr int64_t kBias = 1 << 20;
  for (const auto& pt : cloud) {
    auto cc = [&](double v) {
      return static_cast<int64_t>(std::floor(v / voxel)) + kBias;
    };
    int64_t key = (cc(pt.p.x()) << 42) | (cc(pt.p.y()) << 21) | cc(pt.p.z());
    if (seen.insert(key).second) out.push_back(pt);
  }
  return out;
}

} // namespace mgrecon
