// Copyright mgrecon authors. Apache 2.0 License.
// Independent reference implementations the tests check the library
// against. Everything here trades speed for obviousness: homogeneous-matrix
// projection, SVD-based DLT triangulation, O(n^2) neighborhood scans,
// central finite differences.
#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "mgrecon/cloud.hpp"
#include "mgrecon/geometry.hpp"
#include "mgrecon/grasp.hpp"
#include "mgrecon/refine.hpp"
#include "mgrecon/rng.hpp"

namespace mgrecon::testing {

inline Eigen::Matrix<double, 3, 4> projection_matrix(const Intrinsics& K,
                                                     const Pose& pose) {
  Mat3 Km;
  Km << K.fx, 0.0, K.cx, 0.0, K.fy, K.cy, 0.0, 0.0, 1.0;
  Eigen::Matrix<double, 3, 4> Rt;
  Rt.leftCols<3>() = pose.R.transpose();
  Rt.col(3) = -(pose.R.transpose() * pose.t);
  return Km * Rt;
}

// Homogeneous projection: x ~ P * [p; 1], depth = third row (camera z).
inline Projection oracle_project(const Vec3& p, const Intrinsics& K,
                                 const Pose& pose) {
  Eigen::Vector4d ph;
  ph << p, 1.0;
  Vec3 x = projection_matrix(K, pose) * ph;
  return Projection{Vec2(x.x() / x.z(), x.y() / x.z()), x.z()};
}

// Linear triangulation: null vector of the stacked cross-product rows,
// via full SVD.
inline Vec3 dlt_triangulate(const Vec2& xi, const Intrinsics& Ki,
                            const Pose& Ti, const Vec2& xj,
                            const Intrinsics& Kj, const Pose& Tj) {
  auto Pi = projection_matrix(Ki, Ti);
  auto Pj = projection_matrix(Kj, Tj);
  Eigen::Matrix4d A;
  A.row(0) = xi.x() * Pi.row(2) - Pi.row(0);
  A.row(1) = xi.y() * Pi.row(2) - Pi.row(1);
  A.row(2) = xj.x() * Pj.row(2) - Pj.row(0);
  A.row(3) = xj.y() * Pj.row(2) - Pj.row(1);
  Eigen::JacobiSVD<Eigen::Matrix4d> svd(A, Eigen::ComputeFullV);
  Eigen::Vector4d X = svd.matrixV().col(3);
  return X.head<3>() / X(3);
}

inline Vec3 random_unit(Rng& rng) {
  // Rejection-sampled directions avoid polar clustering.
  while (true) {
    Vec3 v(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0),
           rng.uniform(-1.0, 1.0));
    double n = v.norm();
    if (n > 1e-3 && n <= 1.0) return v / n;
  }
}

// Camera on an upper shell looking at a point near the origin.
inline Pose random_camera_pose(Rng& rng) {
  while (true) {
    Vec3 dir = random_unit(rng);
    if (dir.z() < 0.2) continue; // keep cameras above the scene
    Vec3 eye = dir * rng.uniform(0.6, 1.2);
    Vec3 target(rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1),
                rng.uniform(-0.05, 0.1));
    if ((eye - target).norm() < 0.3) continue;
    return look_at(eye, target);
  }
}

inline std::vector<uint8_t> brute_radius_keep(const PointCloud& cloud,
                                              double r, int64_t n_min) {
  std::vector<uint8_t> keep(cloud.size(), 0);
  double r2 = r * r;
  for (size_t a = 0; a < cloud.size(); ++a) {
    int64_t n = 0;
    for (size_t b = 0; b < cloud.size(); ++b)
      if ((cloud[a].p - cloud[b].p).squaredNorm() < r2) ++n;
    keep[a] = n >= n_min ? 1 : 0;
  }
  return keep;
}

inline std::vector<int32_t> brute_ball(const PointCloud& cloud,
                                       const Vec3& center, double radius) {
  std::vector<int32_t> out;
  double r2 = radius * radius;
  for (size_t k = 0; k < cloud.size(); ++k)
    if ((cloud[k].p - center).squaredNorm() < r2)
      out.push_back(static_cast<int32_t>(k));
  return out;
}

inline std::vector<GraspPose> brute_nms(const std::vector<GraspPose>& grasps,
                                        double delta_t, double delta_r,
                                        int64_t keep) {
  std::vector<size_t> order(grasps.size());
  for (size_t k = 0; k < order.size(); ++k) order[k] = k;
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return grasps[a].score > grasps[b].score;
  });
  std::vector<GraspPose> kept;
  for (size_t cand : order) {
    if (keep >= 0 && static_cast<int64_t>(kept.size()) >= keep) break;
    bool ok = true;
    for (const auto& g : kept) {
      double dt = (grasps[cand].t - g.t).norm();
      double dr = rotation_angle(euler_xyz_to_matrix(grasps[cand].euler_xyz),
                                 euler_xyz_to_matrix(g.euler_xyz));
      if (dt < delta_t && dr < delta_r) {
        ok = false;
        break;
      }
    }
    if (ok) kept.push_back(grasps[cand]);
  }
  return kept;
}

// Verifies fps's greedy invariant: every pick after the seed has the
// strictly largest min-distance to the already-picked prefix, with ties
// resolved to the lowest index.
inline bool fps_picks_maximal(const PointCloud& cloud,
                              const std::vector<int32_t>& picks) {
  if (picks.empty()) return false;
  std::vector<double> min_d2(cloud.size(),
                             std::numeric_limits<double>::infinity());
  for (size_t r = 1; r < picks.size(); ++r) {
    const Vec3& prev = cloud[picks[r - 1]].p;
    int32_t best = -1;
    double best_d2 = -1.0;
    for (size_t i = 0; i < cloud.size(); ++i) {
      double d2 = (cloud[i].p - prev).squaredNorm();
      if (d2 < min_d2[i]) min_d2[i] = d2;
      if (min_d2[i] > best_d2) {
        best_d2 = min_d2[i];
        best = static_cast<int32_t>(i);
      }
    }
    if (best != picks[r]) return false;
  }
  return true;
}

// Central finite differences of problem.loss w.r.t. each variable.
inline std::vector<double> fd_gradient(const RefinementProblem& problem,
                                       int stage,
                                       const std::vector<double>& v,
                                       double h = 1e-6) {
  std::vector<double> grad(v.size(), 0.0);
  std::vector<double> w = v;
  for (size_t k = 0; k < v.size(); ++k) {
    w[k] = v[k] + h;
    double lp = problem.loss(stage, w);
    w[k] = v[k] - h;
    double lm = problem.loss(stage, w);
    w[k] = v[k];
    grad[k] = (lp - lm) / (2.0 * h);
  }
  return grad;
}

inline double rel_err(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// Componentwise 1e-5 relative agreement, with an absolute floor scaled to
// the gradient's magnitude: central differences carry ~|L|*eps/h of
// cancellation noise, so near-zero components cannot meet a purely
// relative bound at float64.
inline bool grad_close(const std::vector<double>& analytic,
                       const std::vector<double>& fd, double rtol = 1e-5) {
  double scale = 1.0;
  for (double g : fd) scale = std::max(scale, std::abs(g));
  double atol = 1e-7 * scale;
  for (size_t k = 0; k < analytic.size(); ++k) {
    double diff = std::abs(analytic[k] - fd[k]);
    if (diff > rtol * std::max(std::abs(analytic[k]), std::abs(fd[k])) + atol)
      return false;
  }
  return true;
}

// Random mini refinement problem: 2-3 views, smooth-noise rasters, random
// continuous matches. Retries until the variable count is at most 200.
inline RefinementProblem make_random_problem(uint64_t seed,
                                             double delta_3d = 0.3,
                                             double delta_2d = 3.0) {
  for (uint64_t attempt = 0;; ++attempt) {
    Rng rng(mix_seed(seed, 0xfdf, attempt));
    const int W = 16, H = 16;
    int n_views = 2 + static_cast<int>(rng.below(2));
    std::vector<RefineViewInput> views;
    for (int v = 0; v < n_views; ++v) {
      RefineViewInput in;
      in.K = Intrinsics{20.0, 20.0, 7.5, 7.5, W, H};
      in.pose = random_camera_pose(rng);
      in.depth = DepthMap(W, H, invalid_depth());
      double base = rng.uniform(0.7, 1.1);
      for (size_t k = 0; k < in.depth.size(); ++k)
        in.depth[k] = base * (1.0 + 0.03 * rng.uniform(-1.0, 1.0));
      views.push_back(std::move(in));
    }
    std::vector<CorrespondenceSet> sets;
    for (int i = 0; i < n_views; ++i)
      for (int j = i + 1; j < n_views; ++j) {
        CorrespondenceSet set;
        set.i = i;
        set.j = j;
        int n_m = 5 + static_cast<int>(rng.below(6));
        for (int m = 0; m < n_m; ++m) {
          Correspondence c;
          c.xi = Vec2(rng.uniform(1.0, W - 2.0), rng.uniform(1.0, H - 2.0));
          c.xj = Vec2(rng.uniform(1.0, W - 2.0), rng.uniform(1.0, H - 2.0));
          c.q = rng.uniform(0.5, 9.0);
          set.matches.push_back(c);
        }
        sets.push_back(std::move(set));
      }
    RefinementProblem problem(std::move(views), sets, delta_3d, delta_2d);
    if (problem.num_variables() >= 8 && problem.num_variables() <= 200 &&
        problem.num_residuals() >= 5)
      return problem;
  }
}

// Unique scratch directory removed on destruction.
class TempDir {
public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = (std::filesystem::temp_directory_path() /
             ("mgrecon_" + tag + "_" + std::to_string(++counter)))
                .string();
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::string& path() const { return path_; }
  std::string file(const std::string& rel) const { return path_ + "/" + rel; }

private:
  std::string path_;
};

} // namespace mgrecon::testing
