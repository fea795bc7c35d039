// Copyright mgrecon authors. Apache 2.0 License.
#pragma once

#include <cstdint>
#include <vector>

#include "mgrecon/geometry.hpp"
#include "mgrecon/grid.hpp"
#include "mgrecon/io.hpp"
#include "mgrecon/observation.hpp"

namespace mgrecon {

// Quadratic below delta, linear above; C1-continuous at the transition.
inline double huber(double r, double delta) {
  return r <= delta ? 0.5 * r * r : delta * (r - 0.5 * delta);
}

// d huber / d r. Magnitude capped at delta.
inline double huber_deriv(double r, double delta) {
  return r <= delta ? r : delta;
}

struct RefinementConfig {
  double delta_3d = 0.3; // meters
  double delta_2d = 3.0; // pixels
  int n_3d = 100;
  int n_2d = 100;
  double step0_3d = 1e-2; // initial step, reset every iteration
  double step0_2d = 1e-3;
  int max_halvings = 30;
};

struct RefineViewInput {
  Intrinsics K;
  Pose pose;
  DepthMap depth; // metric-scale initialization
};

struct TraceRow {
  int iteration; // 0 = value before the first step of the stage
  int stage;     // 1 or 2
  double loss;
  double step;   // accepted step length, 0 for the initial row / stalls
};

// Depth variables live at pixels referenced by match-endpoint bilinear
// footprints (integer endpoints collapse to the single rounded pixel).
// Valid unmatched neighbors enter residuals as frozen constants; footprints
// straddling a depth discontinuity drop the whole correspondence.
class RefinementProblem {
public:
  RefinementProblem(std::vector<RefineViewInput> views,
                    const std::vector<CorrespondenceSet>& sets,
                    double delta_3d = 0.3, double delta_2d = 3.0);

  size_t num_variables() const { return values_.size(); }
  size_t num_residuals() const { return residuals_.size(); }
  int64_t dropped_endpoints() const { return dropped_endpoints_; }

  const std::vector<double>& values() const { return values_; }
  void set_values(std::vector<double> v);

  // stage: 1 = confidence-weighted 3D point distance, 2 = symmetric
  // reprojection. Both Huber-robust. loss() and the loss returned by
  // loss_and_grad() use the same summation tree, so they agree bitwise.
  double loss(int stage, const std::vector<double>& v) const;
  double loss_and_grad(int stage, const std::vector<double>& v,
                       std::vector<double>& grad) const;

  // Cross-projections behind a camera during stage 2, cumulative.
  int64_t behind_count() const { return behind_count_; }

  double mean_pair_distance(const std::vector<double>& v) const;
  double mean_reproj_error(const std::vector<double>& v) const;

  // Dense rasters: the initialization with variables written back.
  std::vector<DepthMap> bake() const;

private:
  struct Endpoint {
    double Sw = 0.0;        // total valid bilinear weight
    double const_inv = 0.0; // sum w/depth over frozen neighbors
    int nv = 0;
    int32_t vidx[4];
    double vw[4];
    Vec3 g;  // pose.R * pixel_ray(x): world ray with unit camera z
  };
  struct Residual {
    Endpoint a, b;
    double q = 0.0;
    Vec2 xi = Vec2::Zero(); // reprojection targets
    Vec2 xj = Vec2::Zero();
    int vi = 0, vj = 0;
  };
  struct Contrib {
    double loss = 0.0;
    int n = 0;
    int32_t idx[8];
    double g[8];
  };

  bool build_endpoint(int view, const Vec2& x, Endpoint& out,
                      std::vector<std::pair<int, int>>& pending_vars);
  // Loss evaluations are residual-count dominated; hoisting 1/v[k] out of
  // the per-residual loop replaces most divisions with multiplies.
  const std::vector<double>& reciprocals(const std::vector<double>& v) const;
  double endpoint_depth(const Endpoint& e,
                        const std::vector<double>& inv_v) const;
  void residual_contrib(const Residual& r, int stage,
                        const std::vector<double>& inv_v, Contrib& out,
                        int64_t* behind) const;

  std::vector<RefineViewInput> views_;
  std::vector<DepthSampler> samplers_; // one per view, over views_[v].depth
  double delta_3d_, delta_2d_;
  std::vector<std::vector<int32_t>> var_of_; // per view, pixel -> var or -1
  std::vector<double> values_;
  std::vector<int32_t> var_view_, var_pixel_;
  std::vector<Residual> residuals_;
  int64_t dropped_endpoints_ = 0;
  mutable int64_t behind_count_ = 0;
  mutable std::vector<Contrib> scratch_;
  mutable std::vector<double> inv_scratch_;
};

struct OptimizeResult {
  std::vector<TraceRow> trace;
};

// Gradient descent with per-iteration backtracking halving; a step is
// accepted only if the loss does not increase and every depth stays
// positive, so per-stage traces are monotone non-increasing by
// construction (also verified by a hard check). Throws NonFiniteLoss if a
// stage starts from a non-finite loss; the problem keeps its last state.
OptimizeResult optimize(RefinementProblem& problem,
                        const RefinementConfig& config);

} // namespace mgrecon
