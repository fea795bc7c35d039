// Copyright mgrecon authors. Apache 2.0 License.
#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <optional>

#include "mgrecon/errors.hpp"

namespace mgrecon {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Degeneracy thresholds: minimum camera-frame depth for a valid projection,
// minimum ray angle and baseline for triangulation.
inline constexpr double kZMin = 1e-6;
inline constexpr double kThetaMin = 1e-4;
inline constexpr double kBaselineMin = 1e-6;

struct Intrinsics {
  double fx = 0, fy = 0, cx = 0, cy = 0;
  int width = 0, height = 0;

  void validate() const;
};

// camera-to-world: p_world = R * p_cam + t. The camera center is t.
struct Pose {
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();

  void validate() const; // orthonormality and det(R)=+1 within 1e-9

  Pose inverse() const { return Pose{R.transpose(), -(R.transpose() * t)}; }
  Pose compose(const Pose& rhs) const {
    return Pose{R * rhs.R, R * rhs.t + t};
  }
  Vec3 to_world(const Vec3& p_cam) const { return R * p_cam + t; }
  Vec3 to_camera(const Vec3& p_world) const {
    return R.transpose() * (p_world - t);
  }
  const Vec3& center() const { return t; }
};

struct Projection {
  Vec2 pix;
  double depth;
};

// (u,v) = (fx X/Z + cx, fy Y/Z + cy) on the camera-frame point.
// Throws BehindCamera when camera-frame z <= kZMin; try_ variant for hot
// paths returns nullopt instead.
Projection project(const Vec3& point_world, const Intrinsics& K,
                   const Pose& pose);
std::optional<Projection> try_project(const Vec3& point_world,
                                      const Intrinsics& K, const Pose& pose);

// Camera-frame ray direction with unit z, so that p_cam = z * ray.
inline Vec3 pixel_ray(const Vec2& pix, const Intrinsics& K) {
  return Vec3((pix.x() - K.cx) / K.fx, (pix.y() - K.cy) / K.fy, 1.0);
}

Vec3 unproject(const Vec2& pix, double depth, const Intrinsics& K,
               const Pose& pose);

struct TriangulatedPoint {
  Vec3 p_world;
  double z_i; // camera-frame depth in view i
  double z_j;
};

enum class TriFailure { kNone, kSmallAngle, kSmallBaseline, kBehindCamera };

// Midpoint of the common perpendicular between the two back-projected rays.
// Fails on ray angle < kThetaMin, baseline < kBaselineMin, or either
// triangulated depth <= kZMin (cheirality).
std::optional<TriangulatedPoint> try_triangulate(
    const Vec2& xi, const Intrinsics& Ki, const Pose& Ti, const Vec2& xj,
    const Intrinsics& Kj, const Pose& Tj, TriFailure* reason = nullptr);

// Throwing wrapper: DegenerateRays on any failure.
TriangulatedPoint triangulate(const Vec2& xi, const Vec2& xj,
                              const Intrinsics& K, const Pose& Ti,
                              const Pose& Tj);

// Camera pose looking from eye toward target, image v axis pointing
// world-down where possible (world up = +z).
Pose look_at(const Vec3& eye, const Vec3& target);

// Geodesic angle between two rotations, in radians.
double rotation_angle(const Mat3& Ra, const Mat3& Rb);

} // namespace mgrecon
