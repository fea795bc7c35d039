// Copyright mgrecon authors. Apache 2.0 License.
#pragma once

#include <array>
#include <string>
#include <vector>

#include "mgrecon/cloud.hpp"
#include "mgrecon/geometry.hpp"
#include "mgrecon/grid.hpp"
#include "mgrecon/observation.hpp"

namespace mgrecon {

// Tabletop scene of analytic primitives. The table is the plane z = 0 and
// is always present; objects rest on it.
struct Primitive {
  enum class Type { kSphere, kBox, kPlane };
  Type type = Type::kSphere;
  Vec3 center = Vec3::Zero(); // sphere
  double radius = 0.0;        // sphere
  Vec3 bmin = Vec3::Zero();   // box
  Vec3 bmax = Vec3::Zero();   // box
  double plane_z = 0.0;       // horizontal plane
  std::array<uint8_t, 3> color{200, 200, 200};
};

struct Scene {
  std::vector<Primitive> objects; // excludes the table
  std::array<uint8_t, 3> table_color{70, 90, 110};
  uint64_t seed = 0;

  Primitive table() const {
    Primitive t;
    t.type = Primitive::Type::kPlane;
    t.plane_z = 0.0;
    t.color = table_color;
    return t;
  }
};

// Random mix of spheres and boxes resting on the table near the origin.
// Fully determined by the seed. sphere_only/box_only restrict the mix
// (planar-only scenes make subpixel sampling exact, which some tests rely
// on).
enum class ObjectMix { kMixed, kBoxesOnly, kSpheresOnly };
Scene make_scene(uint64_t seed, int n_objects,
                 ObjectMix mix = ObjectMix::kMixed);

// Cameras on an upper hemisphere ring (60 degree azimuth steps with small
// deterministic jitter, elevation ~50 degrees, radius ~0.875 m) looking at
// the table center. Six views close the ring; further views revisit earlier
// directions with fresh jitter and mostly densify coverage. View k's pose
// depends only on (seed, k), so shorter view lists are prefixes of longer
// ones. fov_deg is the full vertical field of view.
std::vector<CameraView> ring_views(int n, uint64_t seed, int width,
                                   int height, double fov_deg = 50.0);

struct ViewRender {
  DepthMap depth;   // NaN where no primitive is hit
  RgbImage rgb;
  MaskImage object_mask; // 1 where the nearest hit is a non-table object
};

// Analytic nearest-hit raycast; exact to floating point.
ViewRender render_view(const Scene& scene, const Intrinsics& K,
                       const Pose& pose);

struct RenderedView {
  CameraView cam;
  ViewRender render;
};

std::vector<RenderedView> render_views(const Scene& scene,
                                       const std::vector<CameraView>& views);

// Emulates up-to-scale two-view predictions plus a dense matcher.
struct PerturbationSpec {
  double alpha_min = 1.0; // per-view global scale, log-uniform
  double alpha_max = 1.0;
  double sigma_d = 0.0;   // multiplicative depth noise (relative)
  double sigma_px = 0.0;  // Gaussian pixel noise on both endpoints
  double rho_out = 0.0;   // fraction of injected wrong matches with low q
  int match_stride = 2;   // source-pixel lattice stride

  static PerturbationSpec none() { return {}; }
  static PerturbationSpec standard_noisy() {
    PerturbationSpec s;
    s.alpha_min = 0.3;
    s.alpha_max = 3.0;
    s.sigma_d = 0.02;
    s.sigma_px = 0.5;
    s.rho_out = 0.10;
    s.match_stride = 1; // the emulated matcher is dense per-pixel
    return s;
  }
};

// Inlier confidences lie in [3.5, 9.5] and decrease with the error actually
// injected at that pixel/match (a calibrated predictor, jittered so it is
// not an oracle); outliers draw q from [0.1, 2.9] (below the benchmark
// tau_Q) with a uniformly random target endpoint.
inline constexpr double kInlierQMin = 3.5;
inline constexpr double kInlierQMax = 9.5;
inline constexpr double kOutlierQMin = 0.1;
inline constexpr double kOutlierQMax = 2.9;

struct SceneObservations {
  std::vector<PairPrediction> predictions;           // all pairs i<j
  std::vector<std::vector<Correspondence>> raw;      // parallel to predictions
  std::vector<std::vector<uint8_t>> outlier_labels;  // parallel to raw
  std::vector<double> alphas;                        // per view
};

// Deterministic in (scene, views, spec, seed). Correspondences come from
// projecting ground-truth surface points of the lower-index view into the
// higher-index view; only points that are the target ray's first surface
// hit (analytic covisibility) produce a match.
SceneObservations make_observations(const Scene& scene,
                                    const std::vector<RenderedView>& views,
                                    const PerturbationSpec& spec,
                                    uint64_t seed);

// Unsigned distance from a point to the nearest primitive surface (table
// included).
double surface_distance(const Scene& scene, const Vec3& p);

// Deterministic quasi-uniform samples of object surfaces (table excluded),
// ~spacing meters apart; reference set for coverage.
std::vector<Vec3> sample_object_surfaces(const Scene& scene, double spacing);

struct EvalReport {
  double mean_dist = 0.0;     // mean |point-to-surface|, meters
  double p95_dist = 0.0;      // 95th percentile
  double coverage_5mm = 0.0;  // fraction of object-surface samples with a
                              // cloud point within 5 mm
  double rmse_matched = std::numeric_limits<double>::quiet_NaN();
};

// Throws EmptyCloud on an empty cloud. rmse is filled by the caller when
// refined rasters and ground truth are both at hand.
EvalReport eval_metrics(const PointCloud& cloud, const Scene& scene);

// RMSE of (depth - gt) over pixels valid in both rasters, all views pooled.
double depth_rmse(const std::vector<DepthMap>& depth,
                  const std::vector<DepthMap>& gt);

void write_scene_json(const std::string& path, const Scene& scene,
                      const std::vector<double>& alphas);
Scene read_scene_json(const std::string& path);

} // namespace mgrecon
