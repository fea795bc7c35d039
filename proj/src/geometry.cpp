// Copyright mgrecon authors. Apache 2.0 License.
#include "mgrecon/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace mgrecon {

void Intrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0))
    throw GeometryError("intrinsics: focal lengths must be positive");
  if (width <= 0 || height <= 0)
    throw GeometryError("intrinsics: raster dimensions must be positive");
  if (!(cx >= 0.0 && cx < width) || !(cy >= 0.0 && cy < height))
    throw GeometryError("intrinsics: principal point outside raster");
}

void Pose::validate() const {
  Mat3 rrt = R.transpose() * R - Mat3::Identity();
  if (rrt.cwiseAbs().maxCoeff() > 1e-9)
    throw GeometryError("pose: rotation not orthonormal");
  if (std::abs(R.determinant() - 1.0) > 1e-9)
    throw GeometryError("pose: rotation determinant is not +1");
}

std::optional<Projection> try_project(const Vec3& point_world,
                                      const Intrinsics& K, const Pose& pose) {
  Vec3 p = pose.to_camera(point_world);
  if (!(p.z() > kZMin)) return std::nullopt;
  return Projection{Vec2(K.fx * p.x() / p.z() + K.cx,
                         K.fy * p.y() / p.z() + K.cy),
                    p.z()};
}

Projection project(const Vec3& point_world, const Intrinsics& K,
                   const Pose& pose) {
  auto p = try_project(point_world, K, pose);
  if (!p) throw BehindCamera("project: camera-frame z <= z_min");
  return *p;
}

Vec3 unproject(const Vec2& pix, double depth, const Intrinsics& K,
               const Pose& pose) {
  if (!(depth > 0.0) || !std::isfinite(depth))
    throw NonPositiveDepth("unproject: depth must be positive");
  return pose.to_world(depth * pixel_ray(pix, K));
}

std::optional<TriangulatedPoint> try_triangulate(
    const Vec2& xi, const Intrinsics& Ki, const Pose& Ti, const Vec2& xj,
    const Intrinsics& Kj, const Pose& Tj, TriFailure* reason) {
  auto fail = [&](TriFailure r) -> std::optional<TriangulatedPoint> {
    if (reason) *reason = r;
    return std::nullopt;
  };
  if (reason) *reason = TriFailure::kNone;

  // Ray directions with unit camera-frame z, so the line parameter equals
  // the camera-frame depth.
  Vec3 di = Ti.R * pixel_ray(xi, Ki);
  Vec3 dj = Tj.R * pixel_ray(xj, Kj);
  Vec3 w = Tj.center() - Ti.center();

  if (w.norm() < kBaselineMin) return fail(TriFailure::kSmallBaseline);
  double cosang = std::clamp(
      di.normalized().dot(dj.normalized()), -1.0, 1.0);
  if (std::acos(std::abs(cosang)) < kThetaMin)
    return fail(TriFailure::kSmallAngle);

  // Least-squares closest points: minimize |(oi + s di) - (oj + t dj)|^2.
  double dii = di.squaredNorm();
  double dij = di.dot(dj);
  double djj = dj.squaredNorm();
  double ri = di.dot(w);
  double rj = dj.dot(w);
  double det = dij * dij - dii * djj;
  if (det == 0.0) return fail(TriFailure::kSmallAngle);
  double s = (dij * rj - djj * ri) / det;
  double t = (dii * rj - dij * ri) / det;
  if (!(s > kZMin) || !(t > kZMin)) return fail(TriFailure::kBehindCamera);

  TriangulatedPoint out;
  out.p_world = 0.5 * ((Ti.center() + s * di) + (Tj.center() + t * dj));
  out.z_i = s;
  out.z_j = t;
  return out;
}

TriangulatedPoint triangulate(const Vec2& xi, const Vec2& xj,
                              const Intrinsics& K, const Pose& Ti,
                              const Pose& Tj) {
  TriFailure why = TriFailure::kNone;
  auto tri = try_triangulate(xi, K, Ti, xj, K, Tj, &why);
  if (!tri) {
    const char* msg = why == TriFailure::kSmallBaseline ? "baseline < b_min"
                      : why == TriFailure::kBehindCamera
                          ? "point behind a camera"
                          : "ray angle < theta_min";
    throw DegenerateRays(std::string("triangulate: ") + msg);
  }
  return *tri;
}

Pose look_at(const Vec3& eye, const Vec3& target) {
  Vec3 zc = (target - eye).normalized();
  Vec3 xc = zc.cross(Vec3::UnitZ());
  if (xc.norm() < 1e-9) xc = Vec3::UnitX(); // looking straight up/down
  xc.normalize();
  Vec3 yc = zc.cross(xc);
  Pose pose;
  pose.R.col(0) = xc;
  pose.R.col(1) = yc;
  pose.R.col(2) = zc;
  pose.t = eye;
  return pose;
}

double rotation_angle(const Mat3& Ra, const Mat3& Rb) {
  double c = ((Ra.transpose() * Rb).trace() - 1.0) * 0.5;
  return std::acos(std::clamp(c, -1.0, 1.0));
}

} // namespace mgrecon
