// Copyright mgrecon authors. Apache 2.0 License.
#include "mgrecon/grasp.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "mgrecon/spatial_grid.hpp"

namespace mgrecon {

using nlohmann::json;

Mat3 euler_xyz_to_matrix(const Vec3& e) {
  double ca = std::cos(e.x()), sa = std::sin(e.x());
  double cb = std::cos(e.y()), sb = std::sin(e.y());
  double cc = std::cos(e.z()), sc = std::sin(e.z());
  Mat3 Rx, Ry, Rz;
  Rx << 1, 0, 0, 0, ca, -sa, 0, sa, ca;
  Ry << cb, 0, sb, 0, 1, 0, -sb, 0, cb;
  Rz << cc, -sc, 0, sc, cc, 0, 0, 0, 1;
  return Rz * Ry * Rx;
}

Vec3 matrix_to_euler_xyz(const Mat3& R) {
  double sy = -R(2, 0);
  sy = std::clamp(sy, -1.0, 1.0);
  double ey = std::asin(sy);
  double ex, ez;
  if (std::abs(sy) < 1.0 - 1e-12) {
    ex = std::atan2(R(2, 1), R(2, 2));
    ez = std::atan2(R(1, 0), R(0, 0));
  } else {
    // Gimbal lock: only ex +/- ez is observable; pin ex = 0.
    ex = 0.0;
    ez = std::atan2(-R(0, 1), R(1, 1));
  }
  return Vec3(ex, ey, ez);
}

std::vector<int32_t> fps(const PointCloud& cloud, int64_t k,
                         int32_t seed_index) {
  if (cloud.empty()) throw EmptyCloud("fps: empty point cloud");
  const int64_t n = static_cast<int64_t>(cloud.size());
  k = std::min(k, n);
  std::vector<int32_t> picks;
  picks.reserve(k);
  std::vector<double> min_d2(n, std::numeric_limits<double>::infinity());
  int32_t current = seed_index;
  picks.push_back(current);
  for (int64_t round = 1; round < k; ++round) {
    const Vec3& p = cloud[current].p;
    int32_t best = -1;
    double best_d2 = -1.0;
    for (int64_t i = 0; i < n; ++i) {
      double d2 = (cloud[i].p - p).squaredNorm();
      if (d2 < min_d2[i]) min_d2[i] = d2;
      if (min_d2[i] > best_d2) { // strict: ties keep the lowest index
        best_d2 = min_d2[i];
        best = static_cast<int32_t>(i);
      }
    }
    current = best;
    picks.push_back(current);
  }
  return picks;
}

std::vector<int32_t> ball_query(const PointCloud& cloud, const Vec3& center,
                                double radius, int64_t cap) {
  if (cloud.empty()) return {};
  SpatialGrid grid(cloud, radius);
  return grid.query(center, radius, cap);
}

namespace {

void canonicalize_sign(Vec3& v) {
  int argmax = 0;
  for (int k = 1; k < 3; ++k)
    if (std::abs(v[k]) > std::abs(v[argmax])) argmax = k;
  if (v[argmax] < 0.0) v = -v;
}

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

} // namespace

std::vector<GraspPose> score_region(const PointCloud& cloud,
                                    const RegionProposal& region,
                                    const GraspParams& params) {
  const auto& idx = region.indices;
  if (static_cast<int>(idx.size()) < params.n_pts_min)
    throw DegenerateRegion("score_region: " + std::to_string(idx.size()) +
                           " points < n_pts_min");
  Vec3 centroid = Vec3::Zero();
  for (int32_t i : idx) centroid += cloud[i].p;
  centroid /= static_cast<double>(idx.size());
  Mat3 cov = Mat3::Zero();
  for (int32_t i : idx) {
    Vec3 d = cloud[i].p - centroid;
    cov += d * d.transpose();
  }
  cov /= static_cast<double>(idx.size());

  Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
  Vec3 evals = eig.eigenvalues(); // ascending
  if (!(evals[2] > 1e-12) || !(evals[1] > 1e-12 * std::max(evals[2], 1.0)))
    throw DegenerateRegion("score_region: rank-deficient covariance");

  Vec3 normal = eig.eigenvectors().col(0);    // smallest spread
  Vec3 tangent_major = eig.eigenvectors().col(2);
  Vec3 tangent_minor = eig.eigenvectors().col(1);
  canonicalize_sign(normal);
  canonicalize_sign(tangent_major);
  canonicalize_sign(tangent_minor);

  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (int32_t i : idx) {
    double d = (cloud[i].p - centroid).dot(normal);
    lo = std::min(lo, d);
    hi = std::max(hi, d);
  }
  double raw_width = hi - lo;
  double flatness = clamp01(1.0 - evals[0] / evals[1]);
  double score = clamp01(1.0 - raw_width / params.w_max) * flatness;
  double width = std::min(raw_width, params.w_max);

  // Antipodal closing along the local normal; one proposal per principal
  // tangent (approach) direction.
  std::vector<GraspPose> out;
  for (const Vec3& approach : {tangent_major, tangent_minor}) {
    Mat3 R;
    R.col(0) = approach;
    R.col(1) = normal;
    R.col(2) = approach.cross(normal);
    GraspPose g;
    g.t = centroid;
    g.euler_xyz = matrix_to_euler_xyz(R);
    g.width = width;
    g.score = score;
    out.push_back(g);
  }
  return out;
}

std::vector<GraspPose> nms_se3(const std::vector<GraspPose>& grasps,
                               double delta_t, double delta_r, int64_t keep) {
  std::vector<int32_t> order(grasps.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int32_t a, int32_t b) {
    if (grasps[a].score != grasps[b].score)
      return grasps[a].score > grasps[b].score;
    return a < b;
  });
  std::vector<GraspPose> kept;
  std::vector<Mat3> kept_R;
  for (int32_t cand : order) {
    if (keep >= 0 && static_cast<int64_t>(kept.size()) >= keep) break;
    Mat3 Rc = euler_xyz_to_matrix(grasps[cand].euler_xyz);
    bool suppressed = false;
    for (size_t k = 0; k < kept.size() && !suppressed; ++k) {
      if ((grasps[cand].t - kept[k].t).norm() < delta_t &&
          rotation_angle(Rc, kept_R[k]) < delta_r)
        suppressed = true;
    }
    if (!suppressed) {
      kept.push_back(grasps[cand]);
      kept_R.push_back(Rc);
    }
  }
  return kept;
}

std::vector<GraspPose> generate_grasps(const PointCloud& cloud,
                                       int64_t n_centers,
                                       const GraspParams& params) {
  if (cloud.empty()) return {};
  auto centers = fps(cloud, n_centers, 0);
  SpatialGrid grid(cloud, params.ball_radius);
  std::vector<GraspPose> proposals;
  for (int32_t c : centers) {
    RegionProposal region;
    region.center = cloud[c].p;
    region.indices = grid.query(region.center, params.ball_radius,
                                params.ball_cap);
    if (static_cast<int>(region.indices.size()) < params.n_pts_min) continue;
    Vec3 centroid = Vec3::Zero();
    for (int32_t i : region.indices) centroid += cloud[i].p;
    region.dt = centroid / static_cast<double>(region.indices.size()) -
                region.center;
    try {
      auto scored = score_region(cloud, region, params);
      proposals.insert(proposals.end(), scored.begin(), scored.end());
    } catch (const DegenerateRegion&) {
      continue;
    }
  }
  return nms_se3(proposals, params.nms_delta_t, params.nms_delta_r,
                 params.keep);
}

void write_grasps_json(const std::string& path,
                       const std::vector<GraspPose>& grasps) {
  json arr = json::array();
  for (const auto& g : grasps) {
    arr.push_back({{"t", {g.t.x(), g.t.y(), g.t.z()}},
                   {"euler_xyz",
                    {g.euler_xyz.x(), g.euler_xyz.y(), g.euler_xyz.z()}},
                   {"width", g.width},
                   {"score", g.score}});
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << arr.dump(2) << "\n";
}

std::vector<GraspPose> read_grasps_json(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifact("cannot open " + path);
  json arr;
  try {
    in >> arr;
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  std::vector<GraspPose> out;
  try {
    for (const auto& g : arr) {
      GraspPose p;
      for (int k = 0; k < 3; ++k) {
        p.t[k] = g.at("t")[k].get<double>();
        p.euler_xyz[k] = g.at("euler_xyz")[k].get<double>();
      }
      p.width = g.at("width").get<double>();
      p.score = g.at("score").get<double>();
      out.push_back(p);
    }
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  return out;
}

} // namespace mgrecon
