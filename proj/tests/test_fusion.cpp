// Copyright mgrecon authors. Apache 2.0 License.
#include <doctest.h>

#include <cmath>

#include "mgrecon/fusion.hpp"
#include "mgrecon/rng.hpp"
#include "mgrecon/synthetic.hpp"
#include "oracles.hpp"

using namespace mgrecon;
using namespace mgrecon::testing;

namespace {

CorrespondenceSet one_match(int i, int j, const Vec2& xi, const Vec2& xj) {
  CorrespondenceSet s;
  s.i = i;
  s.j = j;
  s.matches.push_back(Correspondence{xi, xj, 5.0});
  return s;
}

PointCloud random_cloud(uint64_t seed, int n, double extent) {
  Rng rng(seed);
  PointCloud cloud;
  for (int k = 0; k < n; ++k) {
    CloudPoint p;
    p.p = Vec3(rng.uniform(-extent, extent), rng.uniform(-extent, extent),
               rng.uniform(-extent, extent));
    cloud.push_back(p);
  }
  return cloud;
}

} // namespace

TEST_CASE("valid_mask gates on match, confidence, and segmentation") {
  ConfidenceMap chat(4, 4, 5.0);
  MaskImage seg(4, 4, 1);
  auto sets = std::vector<CorrespondenceSet>{
      one_match(0, 1, Vec2(1.4, 2.4), Vec2(0, 0))};

  auto mask = valid_mask(0, sets, chat, seg, 3.0);
  // Only round(xi) = (1,2) is matched.
  int on = 0;
  for (size_t k = 0; k < mask.size(); ++k) on += mask[k];
  CHECK(on == 1);
  CHECK(mask.at(1, 2) == 1);

  // The j side uses round(xj) instead.
  auto mask_j = valid_mask(1, sets, chat, seg, 3.0);
  CHECK(mask_j.at(0, 0) == 1);

  // Confidence gate is strict: Chat == tau fails.
  ConfidenceMap at_tau(4, 4, 3.0);
  CHECK(valid_mask(0, sets, at_tau, seg, 3.0).at(1, 2) == 0);

  // Segmentation veto.
  MaskImage seg_off(4, 4, 0);
  CHECK(valid_mask(0, sets, chat, seg_off, 3.0).at(1, 2) == 0);

  // A view the set never mentions gets an all-zero mask.
  auto other = valid_mask(7, sets, chat, seg, 3.0);
  for (size_t k = 0; k < other.size(); ++k) CHECK(other[k] == 0);
}

TEST_CASE("valid_mask equals a brute-force oracle on synthetic scenes") {
  Scene scene = make_scene(51, 3);
  auto cams = ring_views(3, 51, 48, 48);
  auto rendered = render_views(scene, cams);
  auto obs = make_observations(scene, rendered,
                               PerturbationSpec::standard_noisy(), 4);
  std::vector<CorrespondenceSet> sets;
  for (size_t p = 0; p < obs.predictions.size(); ++p)
    sets.push_back(filter_matches(obs.predictions[p].i, obs.predictions[p].j,
                                  obs.raw[p], 3.0));
  for (int view = 0; view < 3; ++view) {
    auto [zhat, chat] = aggregate_depth(obs.predictions, view);
    const MaskImage& seg = rendered[view].render.object_mask;
    double tau = 2.0;
    auto mask = valid_mask(view, sets, chat, seg, tau);

    MaskImage want(48, 48, 0);
    for (const auto& set : sets) {
      if (set.i != view && set.j != view) continue;
      for (const auto& m : set.matches) {
        const Vec2& x = set.i == view ? m.xi : m.xj;
        int px = static_cast<int>(std::lround(x.x()));
        int py = static_cast<int>(std::lround(x.y()));
        if (!want.in_bounds(px, py)) continue;
        if (!(chat.at(px, py) > tau)) continue;
        if (seg.at(px, py) != 1) continue;
        want.at(px, py) = 1;
      }
    }
    REQUIRE(mask.size() == want.size());
    size_t on = 0;
    for (size_t k = 0; k < mask.size(); ++k) {
      CHECK(mask[k] == want[k]);
      on += mask[k];
    }
    CHECK(on > 0);

    // Raising tau can only shrink the mask.
    auto tighter = valid_mask(view, sets, chat, seg, tau + 2.0);
    for (size_t k = 0; k < mask.size(); ++k) CHECK(tighter[k] <= mask[k]);
  }
}

TEST_CASE("valid_mask rejects mismatched raster shapes") {
  ConfidenceMap chat(4, 4, 5.0);
  MaskImage seg(5, 5, 1);
  auto sets = std::vector<CorrespondenceSet>{
      one_match(0, 1, Vec2(1, 1), Vec2(0, 0))};
  CHECK_THROWS_AS(valid_mask(0, sets, chat, seg, 3.0), DimensionMismatch);
}

TEST_CASE("fuse: positions, colors, provenance, and ordering") {
  Intrinsics K{100, 100, 16, 16, 32, 32};
  Pose pose; // identity
  DepthMap depth(32, 32, 2.0);
  depth.at(5, 5) = invalid_depth();
  RgbImage rgb;
  rgb.r = Grid2D<uint8_t>(32, 32, 200);
  rgb.g = Grid2D<uint8_t>(32, 32, 100);
  rgb.b = Grid2D<uint8_t>(32, 32, 50);
  MaskImage valid(32, 32, 0);
  valid.at(4, 4) = 1;
  valid.at(5, 5) = 1;  // invalid depth: must be skipped
  valid.at(20, 10) = 1;
  valid.at(16, 16) = 1;

  FusionViewInput view{K, pose, &depth, &rgb, &valid};
  auto cloud = fuse({view});
  REQUIRE(cloud.size() == 3);
  // Row-major: (4,4) then (20,10) then (16,16).
  CHECK(cloud[0].px == 4);
  CHECK(cloud[0].py == 4);
  CHECK(cloud[1].py == 10);
  CHECK(cloud[2].px == 16);
  CHECK((cloud[2].p - Vec3(0, 0, 2)).norm() < 1e-12);
  CHECK((cloud[0].p - unproject(Vec2(4, 4), 2.0, K, pose)).norm() == 0.0);
  CHECK(cloud[0].r == 200);
  CHECK(cloud[0].g == 100);
  CHECK(cloud[0].b == 50);
  CHECK(cloud[0].view == 0);

  // Two views concatenate in view order.
  auto two = fuse({view, view});
  REQUIRE(two.size() == 6);
  CHECK(two[3].view == 1);
  CHECK(two[3].px == 4);

  // All-zero masks fuse to an empty cloud.
  MaskImage none(32, 32, 0);
  FusionViewInput empty_view{K, pose, &depth, &rgb, &none};
  CHECK(fuse({empty_view}).empty());
}

TEST_CASE("fused synthetic points lie on the scene surface") {
  Scene scene = make_scene(53, 4);
  auto cams = ring_views(3, 53, 48, 48);
  auto rendered = render_views(scene, cams);
  std::vector<FusionViewInput> inputs;
  std::vector<MaskImage> masks(cams.size());
  for (size_t v = 0; v < cams.size(); ++v) {
    const auto& r = rendered[v].render;
    masks[v] = MaskImage(48, 48, 0);
    for (int y = 0; y < 48; ++y)
      for (int x = 0; x < 48; ++x)
        masks[v].at(x, y) = depth_valid(r.depth.at(x, y)) ? 1 : 0;
    inputs.push_back({cams[v].K, cams[v].pose, &r.depth, &r.rgb, &masks[v]});
  }
  auto cloud = fuse(inputs);
  REQUIRE(cloud.size() > 1000);
  double worst = 0.0;
  for (const auto& p : cloud)
    worst = std::max(worst, surface_distance(scene, p.p));
  CHECK(worst < 1e-6);
}

TEST_CASE("radius_filter matches the brute-force oracle") {
  auto cloud = random_cloud(61, 300, 0.05);
  for (double r : {0.01, 0.03}) {
    for (int64_t n_min : {1, 3, 10}) {
      auto kept = radius_filter(cloud, r, n_min);
      auto want = brute_radius_keep(cloud, r, n_min);
      size_t want_n = 0;
      for (auto b : want) want_n += b;
      REQUIRE(kept.size() == want_n);
      // Order-preserving subset: walk both in lockstep.
      size_t at = 0;
      for (size_t k = 0; k < cloud.size(); ++k) {
        if (!want[k]) continue;
        REQUIRE(at < kept.size());
        CHECK((kept[at].p - cloud[k].p).norm() == 0.0);
        ++at;
      }
    }
  }
}

TEST_CASE("radius_filter counts the point itself and uses strict distance") {
  PointCloud lone;
  CloudPoint a;
  a.p = Vec3(0, 0, 0);
  lone.push_back(a);
  CHECK(radius_filter(lone, 0.01, 1).size() == 1); // self counts
  CHECK(radius_filter(lone, 0.01, 2).empty());

  PointCloud pair = lone;
  CloudPoint b;
  b.p = Vec3(0.01, 0, 0); // exactly at distance r
  pair.push_back(b);
  CHECK(radius_filter(pair, 0.01, 2).empty()); // strict: r itself excluded
  CHECK(radius_filter(pair, 0.0100001, 2).size() == 2);

  // Monotone: raising n_min never keeps more points.
  auto cloud = random_cloud(62, 200, 0.03);
  size_t last = cloud.size() + 1;
  for (int64_t n_min : {1, 2, 4, 8, 16}) {
    size_t n = radius_filter(cloud, 0.02, n_min).size();
    CHECK(n <= last);
    last = n;
  }
}

TEST_CASE("voxel_downsample keeps first occupant per voxel, in order") {
  PointCloud cloud;
  auto add = [&](double x, double y, double z) {
    CloudPoint p;
    p.p = Vec3(x, y, z);
    p.px = static_cast<int32_t>(cloud.size()); // tag encounter order
    cloud.push_back(p);
  };
  add(0.001, 0.001, 0.001);
  add(0.002, 0.002, 0.002); // same 1 cm voxel as the first
  add(0.011, 0.001, 0.001); // next voxel in x
  add(0.001, 0.012, 0.001);
  auto down = voxel_downsample(cloud, 0.01);
  REQUIRE(down.size() == 3);
  CHECK(down[0].px == 0);
  CHECK(down[1].px == 2);
  CHECK(down[2].px == 3);

  // Non-positive voxel size is the identity.
  auto same = voxel_downsample(cloud, 0.0);
  REQUIRE(same.size() == cloud.size());
  for (size_t k = 0; k < cloud.size(); ++k)
    CHECK((same[k].p - cloud[k].p).norm() == 0.0);
}
