// Copyright mgrecon authors. Apache 2.0 License.
#pragma once

#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "mgrecon/cloud.hpp"
#include "mgrecon/geometry.hpp"

namespace mgrecon {

// 6-DoF parallel-jaw grasp: translation, extrinsic X-Y-Z Euler orientation
// (gripper x = approach, y = closing axis), width, quality in [0, 1].
struct GraspPose {
  Vec3 t = Vec3::Zero();
  Vec3 euler_xyz = Vec3::Zero();
  double width = 0.0;
  double score = 0.0;
};

// R = Rz(ez) * Ry(ey) * Rx(ex) (extrinsic X-Y-Z). Recovery returns angles
// in (-pi, pi]; the gimbal-locked case pins ex = 0.
Mat3 euler_xyz_to_matrix(const Vec3& euler);
Vec3 matrix_to_euler_xyz(const Mat3& R);

struct GraspParams {
  double ball_radius = 0.05;
  int64_t ball_cap = 2048;
  double w_max = 0.085;
  int n_pts_min = 30;
  double nms_delta_t = 0.02;
  double nms_delta_r = 30.0 * std::numbers::pi / 180.0;
  int keep = 50;
};

// Furthest point sampling: first pick = seed_index, then greedy max-min
// distance, ties to the lowest index. k > |P| returns all points.
std::vector<int32_t> fps(const PointCloud& cloud, int64_t k,
                         int32_t seed_index);

// Points strictly within radius of center, ascending index, truncated to
// cap (cap < 0 = uncapped). Grid-accelerated.
std::vector<int32_t> ball_query(const PointCloud& cloud, const Vec3& center,
                                double radius, int64_t cap);

struct RegionProposal {
  Vec3 center = Vec3::Zero();       // FPS sample
  Vec3 dt = Vec3::Zero();           // centroid - center
  std::vector<int32_t> indices;     // ball query result
};

// Geometric antipodal stand-in for a learned region scorer: least-squares
// plane fit via the covariance eigensystem; closing axis along the local
// normal, one proposal per principal tangent (approach) direction; width =
// extent along the normal clamped to w_max; score = (1 - raw_width /
// w_max)+ * flatness. Deterministic; eigenvector signs are canonicalized
// (largest-magnitude component positive).
std::vector<GraspPose> score_region(const PointCloud& cloud,
                                    const RegionProposal& region,
                                    const GraspParams& params);

// Greedy by (score desc, index asc); suppresses a grasp when translation
// distance < delta_t AND geodesic rotation angle < delta_r to a kept grasp.
std::vector<GraspPose> nms_se3(const std::vector<GraspPose>& grasps,
                               double delta_t, double delta_r, int64_t keep);

// Full stand-in decoder: FPS centers -> ball regions -> score_region ->
// SE(3) NMS. Regions that are degenerate or too small are skipped.
std::vector<GraspPose> generate_grasps(const PointCloud& cloud, int64_t n_centers,
                                       const GraspParams& params);

void write_grasps_json(const std::string& path,
                       const std::vector<GraspPose>& grasps);
std::vector<GraspPose> read_grasps_json(const std::string& path);

} // namespace mgrecon
