// Copyright mgrecon authors. Apache 2.0 License.
#pragma once

#include <vector>

#include "mgrecon/cloud.hpp"
#include "mgrecon/grid.hpp"
#include "mgrecon/io.hpp"
#include "mgrecon/observation.hpp"

namespace mgrecon {

// V(x) = [some filtered match touches pixel x] AND [Chat(x) > tau_C] AND
// [S(x) = 1]. A match touches round(xi) when the set's i side is this view
// and round(xj) when the j side is.
MaskImage valid_mask(int view, const std::vector<CorrespondenceSet>& sets,
                     const ConfidenceMap& chat, const MaskImage& seg,
                     double tau_C);

struct FusionViewInput {
  Intrinsics K;
  Pose pose;
  const DepthMap* depth = nullptr; // refined
  const RgbImage* rgb = nullptr;
  const MaskImage* valid = nullptr;
};

// Concatenates unprojected valid pixels in view order, row-major pixels
// within a view. Pixels with invalid depth are skipped even when masked
// valid.
PointCloud fuse(const std::vector<FusionViewInput>& views);

// Keeps points with >= n_min neighbors strictly inside radius r (a point is
// its own neighbor). Grid-accelerated; order preserving.
PointCloud radius_filter(const PointCloud& cloud, double r, int64_t n_min);

// Optional post-step, default off in the pipeline: keeps the first point of
// each occupied voxel, preserving encounter order.
PointCloud voxel_downsample(const PointCloud& cloud, double voxel);

} // namespace mgrecon
