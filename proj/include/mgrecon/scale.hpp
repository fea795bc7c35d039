// Copyright mgrecon authors. Apache 2.0 License.
#pragma once

#include <vector>

#include "mgrecon/geometry.hpp"
#include "mgrecon/grid.hpp"
#include "mgrecon/io.hpp"
#include "mgrecon/observation.hpp"

namespace mgrecon {

inline constexpr int kNSupportMin = 20;

// Minimal pair set covering all views: each view picks the pair maximizing
// the summed match confidence (ties to the lowest partner index).
struct PairCover {
  std::vector<std::pair<int, int>> pairs;  // deduplicated
  std::vector<int> neighbor_set_of_view;   // view -> index into the input sets
};

PairCover select_pair_cover(const std::vector<CorrespondenceSet>& sets,
                            int n_views, int n_support_min = kNSupportMin);

struct TriangulatedMatch {
  Correspondence c;
  Vec3 p_world = Vec3::Zero();
  double z_i = 0.0; // camera-frame depth in view i (cheirality: > 0)
  double z_j = 0.0;
};

struct TriangulationDrops {
  int64_t small_angle = 0;
  int64_t small_baseline = 0;
  int64_t behind = 0;
  int64_t total() const { return small_angle + small_baseline + behind; }
};

struct TriangulatedSet {
  std::vector<TriangulatedMatch> matches;
  TriangulationDrops drops;
};

// Triangulates every match of the set; failures are dropped and counted,
// never thrown.
TriangulatedSet triangulate_set(const CorrespondenceSet& set,
                                const Intrinsics& Ki, const Pose& Ti,
                                const Intrinsics& Kj, const Pose& Tj);

struct ScaleEstimate {
  int view = -1;
  double s = 1.0;
  int n_support = 0;
};

enum class ViewRole { kI, kJ };

// Ratio of sums: s = sum(z_tri) / sum(Zhat(x)) over matches whose subpixel
// depth lookup succeeds. Lookup uses the match endpoint of the chosen role.
ScaleEstimate estimate_scale(const std::vector<TriangulatedMatch>& tri,
                             const DepthMap& zhat, ViewRole role,
                             int n_support_min = kNSupportMin);

// Elementwise multiply; invalid pixels stay invalid.
DepthMap apply_scale(const DepthMap& zhat, double s);

// Pipeline helper: cover selection + triangulation + one scale per view
// via its chosen pair.
std::vector<ScaleEstimate> recover_view_scales(
    const std::vector<CorrespondenceSet>& sets,
    const std::vector<CameraView>& cams, const std::vector<DepthMap>& zhat,
    int n_support_min = kNSupportMin, TriangulationDrops* drops = nullptr);

} // namespace mgrecon
