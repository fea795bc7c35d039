// Copyright mgrecon authors. Apache 2.0 License.
#include "mgrecon/scale.hpp"

#include <cmath>
#include <limits>

namespace mgrecon {

PairCover select_pair_cover(const std::vector<CorrespondenceSet>& sets,
                            int n_views, int n_support_min) {
  PairCover cover;
  cover.neighbor_set_of_view.assign(n_views, -1);
  for (int v = 0; v < n_views; ++v) {
    double best_q = -1.0;
    int best_set = -1;
    int best_partner = std::numeric_limits<int>::max();
    for (size_t s = 0; s < sets.size(); ++s) {
      const auto& set = sets[s];
      if (set.i != v && set.j != v) continue;
      if (static_cast<int>(set.matches.size()) < n_support_min) continue;
      int partner = set.i == v ? set.j : set.i;
      double q = set.q_sum();
      if (q > best_q || (q == best_q && partner < best_partner)) {
        best_q = q;
        best_set = static_cast<int>(s);
        best_partner = partner;
      }
    }
    if (best_set < 0)
      throw UncoveredView("select_pair_cover: view " + std::to_string(v) +
                          " has no pair with >= " +
                          std::to_string(n_support_min) + " matches");
    cover.neighbor_set_of_view[v] = best_set;
  }
  for (int v = 0; v < n_views; ++v) {
    const auto& set = sets[cover.neighbor_set_of_view[v]];
    std::pair<int, int> p{set.i, set.j};
    bool seen = false;
    for (const auto& q : cover.pairs) seen |= (q == p);
    if (!seen) cover.pairs.push_back(p);
  }
  return cover;
}

TriangulatedSet triangulate_set(const CorrespondenceSet& set,
                                const Intrinsics& Ki, const Pose& Ti,
                                const Intrinsics& Kj, const Pose& Tj) {
  TriangulatedSet out;
  out.matches.reserve(set.matches.size());
  for (const auto& m : set.matches) {
    TriFailure why = TriFailure::kNone;
    auto tri = try_triangulate(m.xi, Ki, Ti, m.xj, Kj, Tj, &why);
    if (!tri) {
      switch (why) {
        case TriFailure::kSmallAngle: ++out.drops.small_angle; break;
        case TriFailure::kSmallBaseline: ++out.drops.small_baseline; break;
        default: ++out.drops.behind; break;
      }
      continue;
    }
    out.matches.push_back({m, tri->p_world, tri->z_i, tri->z_j});
  }
  return out;
}

ScaleEstimate estimate_scale(const std::vector<TriangulatedMatch>& tri,
                             const DepthMap& zhat, ViewRole role,
                             int n_support_min) {
  DepthSampler sampler(zhat);
  double sum_tri = 0.0, sum_pred = 0.0;
  int n = 0;
  for (const auto& t : tri) {
    const Vec2& x = role == ViewRole::kI ? t.c.xi : t.c.xj;
    auto pred = sampler.sample(x.x(), x.y());
    if (!pred) continue;
    sum_tri += role == ViewRole::kI ? t.z_i : t.z_j;
    sum_pred += *pred;
    ++n;
  }
  if (n < n_support_min)
    throw InsufficientSupport("estimate_scale: " + std::to_string(n) +
                              " supporting matches < " +
                              std::to_string(n_support_min));
  if (!(sum_pred > 0.0))
    throw ZeroPredictedDepthSum("estimate_scale: predicted depth sum is 0");
  ScaleEstimate est;
  est.s = sum_tri / sum_pred;
  est.n_support = n;
  return est;
}

DepthMap apply_scale(const DepthMap& zhat, double s) {
  DepthMap out = zhat;
  for (size_t k = 0; k < out.size(); ++k)
    if (depth_valid(out[k])) out[k] *= s;
  return out;
}

std::vector<ScaleEstimate> recover_view_scales(
    const std::vector<CorrespondenceSet>& sets,
    const std::vector<CameraView>& cams, const std::vector<DepthMap>& zhat,
    int n_support_min, TriangulationDrops* drops) {
  const int n_views = static_cast<int>(cams.size());
  PairCover cover = select_pair_cover(sets, n_views, n_support_min);

  // Triangulate each distinct cover set once.
  std::vector<int> tri_cache(sets.size(), -1);
  std::vector<TriangulatedSet> tris;
  for (int v = 0; v < n_views; ++v) {
    int s = cover.neighbor_set_of_view[v];
    if (tri_cache[s] >= 0) continue;
    const auto& set = sets[s];
    tri_cache[s] = static_cast<int>(tris.size());
    tris.push_back(triangulate_set(set, cams[set.i].K, cams[set.i].pose,
                                   cams[set.j].K, cams[set.j].pose));
    if (drops) {
      drops->small_angle += tris.back().drops.small_angle;
      drops->small_baseline += tris.back().drops.small_baseline;
      drops->behind += tris.back().drops.behind;
    }
  }

  std::vector<ScaleEstimate> scales(n_views);
  for (int v = 0; v < n_views; ++v) {
    int s = cover.neighbor_set_of_view[v];
    const auto& set = sets[s];
    ViewRole role = set.i == v ? ViewRole::kI : ViewRole::kJ;
    ScaleEstimate est = estimate_scale(tris[tri_cache[s]].matches, zhat[v],
                                       role, n_support_min);
    est.view = v;
    scales[v] = est;
  }
  return scales;
}

} // namespace mgrecon
