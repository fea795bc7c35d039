// Copyright mgrecon authors. Apache 2.0 License.
#include "mgrecon/refine.hpp"

#include <cmath>
#include <mutex>

#include "mgrecon/parallel.hpp"

namespace mgrecon {

bool RefinementProblem::build_endpoint(
    int view, const Vec2& x, Endpoint& out,
    std::vector<std::pair<int, int>>& pending_vars) {
  // Footprint acceptance (silhouette / discontinuity / crease rejection)
  // is shared with the scale stage's subpixel lookup.
  auto fp = samplers_[view].accept(x.x(), x.y());
  if (!fp) return false;
  out.Sw = fp->Sw;
  out.const_inv = 0.0;
  out.nv = fp->nv;
  pending_vars.clear();
  for (int k = 0; k < fp->nv; ++k) {
    // Neighbor pixels recorded now; variable ids assigned on commit, once
    // both endpoints of the correspondence are known to be usable.
    out.vidx[k] = -1;
    out.vw[k] = fp->w[k];
    pending_vars.emplace_back(fp->px[k], fp->py[k]);
  }
  out.g = views_[view].pose.R * pixel_ray(x, views_[view].K);
  return true;
}

RefinementProblem::RefinementProblem(
    std::vector<RefineViewInput> views,
    const std::vector<CorrespondenceSet>& sets, double delta_3d,
    double delta_2d)
    : views_(std::move(views)), delta_3d_(delta_3d), delta_2d_(delta_2d) {
  var_of_.resize(views_.size());
  samplers_.reserve(views_.size());
  for (size_t v = 0; v < views_.size(); ++v) {
    var_of_[v].assign(views_[v].depth.size(), -1);
    samplers_.emplace_back(views_[v].depth);
  }

  auto commit_vars = [&](int view, Endpoint& e,
                         const std::vector<std::pair<int, int>>& pixels) {
    const DepthMap& depth = views_[view].depth;
    for (int k = 0; k < e.nv; ++k) {
      auto [px, py] = pixels[k];
      size_t lin = static_cast<size_t>(py) * depth.width() + px;
      int32_t& slot = var_of_[view][lin];
      if (slot < 0) {
        slot = static_cast<int32_t>(values_.size());
        values_.push_back(depth.at(px, py));
        var_view_.push_back(view);
        var_pixel_.push_back(static_cast<int32_t>(lin));
      }
      e.vidx[k] = slot;
    }
  };

  std::vector<std::pair<int, int>> pend_a, pend_b;
  for (const auto& set : sets) {
    for (const auto& m : set.matches) {
      Residual r;
      r.vi = set.i;
      r.vj = set.j;
      r.q = m.q;
      r.xi = m.xi;
      r.xj = m.xj;
      if (!build_endpoint(set.i, m.xi, r.a, pend_a) ||
          !build_endpoint(set.j, m.xj, r.b, pend_b)) {
        ++dropped_endpoints_;
        continue;
      }
      commit_vars(set.i, r.a, pend_a);
      commit_vars(set.j, r.b, pend_b);
      residuals_.push_back(r);
    }
  }
  scratch_.resize(residuals_.size());
}

void RefinementProblem::set_values(std::vector<double> v) {
  if (v.size() != values_.size())
    throw DimensionMismatch("set_values: wrong variable count");
  values_ = std::move(v);
}

const std::vector<double>& RefinementProblem::reciprocals(
    const std::vector<double>& v) const {
  inv_scratch_.resize(v.size());
  for (size_t k = 0; k < v.size(); ++k) inv_scratch_[k] = 1.0 / v[k];
  return inv_scratch_;
}

inline double RefinementProblem::endpoint_depth(
    const Endpoint& e, const std::vector<double>& inv_v) const {
  double inv = e.const_inv;
  for (int k = 0; k < e.nv; ++k) inv += e.vw[k] * inv_v[e.vidx[k]];
  return e.Sw / inv;
}

void RefinementProblem::residual_contrib(const Residual& r, int stage,
                                         const std::vector<double>& inv_v,
                                         Contrib& out, int64_t* behind) const {
  out.loss = 0.0;
  out.n = 0;
  double za = endpoint_depth(r.a, inv_v);
  double zb = endpoint_depth(r.b, inv_v);
  Vec3 pa = za * r.a.g + views_[r.vi].pose.t;
  Vec3 pb = zb * r.b.g + views_[r.vj].pose.t;

  auto push_grad = [&](const Endpoint& e, double z, double dL_dz) {
    double z2_over_Sw = z * z / e.Sw;
    for (int k = 0; k < e.nv; ++k) {
      double ivk = inv_v[e.vidx[k]];
      out.idx[out.n] = e.vidx[k];
      out.g[out.n] = dL_dz * z2_over_Sw * e.vw[k] * ivk * ivk;
      ++out.n;
    }
  };

  if (stage == 1) {
    Vec3 d = pa - pb;
    double dist = d.norm();
    out.loss = r.q * huber(dist, delta_3d_);
    if (dist > 1e-12) {
      double s = r.q * huber_deriv(dist, delta_3d_) / dist;
      push_grad(r.a, za, s * d.dot(r.a.g));
      push_grad(r.b, zb, -s * d.dot(r.b.g));
    }
    return;
  }

  // Stage 2: symmetric reprojection. Each direction depends only on its own
  // endpoint depth; directions behind the target camera contribute nothing.
  auto direction = [&](const Endpoint& e, double z, const Vec3& p_world,
                       int target_view, const Vec2& target) {
    const Pose& pt = views_[target_view].pose;
    const Intrinsics& K = views_[target_view].K;
    Vec3 pc = pt.R.transpose() * (p_world - pt.t);
    if (!(pc.z() > kZMin)) {
      if (behind) ++(*behind);
      return;
    }
    double iz = 1.0 / pc.z();
    Vec2 err(K.fx * pc.x() * iz + K.cx - target.x(),
             K.fy * pc.y() * iz + K.cy - target.y());
    double dist = err.norm();
    out.loss += r.q * huber(dist, delta_2d_);
    if (dist > 1e-12) {
      Vec3 h = pt.R.transpose() * e.g; // d p_cam / d z
      double du = K.fx * iz * (h.x() - pc.x() * iz * h.z());
      double dv = K.fy * iz * (h.y() - pc.y() * iz * h.z());
      double s = r.q * huber_deriv(dist, delta_2d_) / dist;
      push_grad(e, z, s * (err.x() * du + err.y() * dv));
    }
  };
  direction(r.a, za, pa, r.vj, r.xj);
  direction(r.b, zb, pb, r.vi, r.xi);
}

double RefinementProblem::loss(int stage, const std::vector<double>& v) const {
  const auto& inv_v = reciprocals(v);
  return block_sum(residuals_.size(), [&](size_t k) {
    Contrib c;
    residual_contrib(residuals_[k], stage, inv_v, c, nullptr);
    return c.loss;
  });
}

double RefinementProblem::loss_and_grad(int stage,
                                        const std::vector<double>& v,
                                        std::vector<double>& grad) const {
  grad.assign(values_.size(), 0.0);
  const auto& inv_v = reciprocals(v);
  const size_t n = residuals_.size();
  std::mutex behind_mutex;
  parallel_for(n, [&](size_t lo, size_t hi) {
    int64_t behind = 0;
    for (size_t k = lo; k < hi; ++k)
      residual_contrib(residuals_[k], stage, inv_v, scratch_[k], &behind);
    if (behind) {
      std::lock_guard<std::mutex> lock(behind_mutex);
      behind_count_ += behind;
    }
  });
  // Serial scatter in residual order keeps accumulation deterministic for
  // any thread count.
  for (size_t k = 0; k < n; ++k) {
    const Contrib& c = scratch_[k];
    for (int t = 0; t < c.n; ++t) grad[c.idx[t]] += c.g[t];
  }
  return block_sum(n, [&](size_t k) { return scratch_[k].loss; });
}

double RefinementProblem::mean_pair_distance(
    const std::vector<double>& v) const {
  if (residuals_.empty()) return 0.0;
  const auto& inv_v = reciprocals(v);
  double sum = block_sum(residuals_.size(), [&](size_t k) {
    const Residual& r = residuals_[k];
    Vec3 pa = endpoint_depth(r.a, inv_v) * r.a.g + views_[r.vi].pose.t;
    Vec3 pb = endpoint_depth(r.b, inv_v) * r.b.g + views_[r.vj].pose.t;
    return (pa - pb).norm();
  });
  return sum / residuals_.size();
}

double RefinementProblem::mean_reproj_error(
    const std::vector<double>& v) const {
  double sum = 0.0;
  double count = 0.0;
  const auto& inv_v = reciprocals(v);
  for (const auto& r : residuals_) {
    Vec3 pa = endpoint_depth(r.a, inv_v) * r.a.g + views_[r.vi].pose.t;
    Vec3 pb = endpoint_depth(r.b, inv_v) * r.b.g + views_[r.vj].pose.t;
    auto err_into = [&](const Vec3& pw, int target_view, const Vec2& target) {
      auto proj =
          try_project(pw, views_[target_view].K, views_[target_view].pose);
      if (!proj) return;
      sum += (proj->pix - target).norm();
      count += 1.0;
    };
    err_into(pa, r.vj, r.xj);
    err_into(pb, r.vi, r.xi);
  }
  return count > 0.0 ? sum / count : 0.0;
}

std::vector<DepthMap> RefinementProblem::bake() const {
  std::vector<DepthMap> out;
  out.reserve(views_.size());
  for (const auto& v : views_) out.push_back(v.depth);
  for (size_t k = 0; k < values_.size(); ++k)
    out[var_view_[k]][var_pixel_[k]] = values_[k];
  return out;
}

OptimizeResult optimize(RefinementProblem& problem,
                        const RefinementConfig& config) {
  OptimizeResult result;
  std::vector<double> v = problem.values();
  std::vector<double> grad, candidate;

  auto run_stage = [&](int stage, int iterations, double step0) {
    if (iterations <= 0) return;
    double L = problem.loss(stage, v);
    if (!std::isfinite(L))
      throw NonFiniteLoss("optimize: stage " + std::to_string(stage) +
                          " starts from a non-finite loss");
    result.trace.push_back({0, stage, L, 0.0});
    for (int it = 1; it <= iterations; ++it) {
      problem.loss_and_grad(stage, v, grad);
      double gmax = 0.0;
      for (double g : grad) gmax = std::max(gmax, std::abs(g));
      if (gmax == 0.0) break; // exact stationary point

      double step = step0;
      bool accepted = false;
      candidate.resize(v.size());
      for (int h = 0; h <= config.max_halvings && !accepted; ++h) {
        bool positive = true;
        for (size_t k = 0; k < v.size(); ++k) {
          candidate[k] = v[k] - step * grad[k];
          if (!(candidate[k] > 0.0)) {
            positive = false;
            break;
          }
        }
        if (positive) {
          double Lc = problem.loss(stage, candidate);
          if (std::isfinite(Lc) && Lc <= L) { // non-increasing only
            v.swap(candidate);
            L = Lc;
            result.trace.push_back({it, stage, L, step});
            accepted = true;
          }
        }
        if (!accepted) step *= 0.5;
      }
      if (!accepted) {
        // No scale improves the loss: stationary for this stage; further
        // iterations would repeat the same rejections.
        result.trace.push_back({it, stage, L, 0.0});
        break;
      }
    }
  };

  run_stage(1, config.n_3d, config.step0_3d);
  run_stage(2, config.n_2d, config.step0_2d);
  problem.set_values(std::move(v));
  return result;
}

} // namespace mgrecon
