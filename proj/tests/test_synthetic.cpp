// Copyright mgrecon authors. Apache 2.0 License.
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "mgrecon/observation.hpp"
#include "mgrecon/rng.hpp"
#include "mgrecon/synthetic.hpp"
#include "oracles.hpp"

using namespace mgrecon;
using namespace mgrecon::testing;

TEST_CASE("make_scene is seed-deterministic and rests on the table") {
  Scene a = make_scene(7, 5);
  Scene b = make_scene(7, 5);
  REQUIRE(a.objects.size() == b.objects.size());
  REQUIRE(static_cast<int>(a.objects.size()) == 5);
  for (size_t k = 0; k < a.objects.size(); ++k) {
    CHECK(a.objects[k].type == b.objects[k].type);
    CHECK((a.objects[k].center - b.objects[k].center).norm() == 0.0);
    CHECK(a.objects[k].radius == b.objects[k].radius);
    CHECK((a.objects[k].bmin - b.objects[k].bmin).norm() == 0.0);
  }
  Scene c = make_scene(8, 5);
  bool identical = true;
  for (size_t k = 0; k < a.objects.size(); ++k)
    if ((a.objects[k].center - c.objects[k].center).norm() != 0.0 &&
        (a.objects[k].bmin - c.objects[k].bmin).norm() != 0.0)
      identical = false;
  CHECK(!identical);

  for (const auto& obj : a.objects) {
    if (obj.type == Primitive::Type::kSphere) {
      CHECK(obj.center.z() == doctest::Approx(obj.radius).epsilon(1e-12));
    } else if (obj.type == Primitive::Type::kBox) {
      CHECK(obj.bmin.z() == doctest::Approx(0.0).epsilon(1e-12));
      CHECK(obj.bmax.z() > obj.bmin.z());
    }
  }
  for (const auto& obj : make_scene(9, 6, ObjectMix::kBoxesOnly).objects)
    CHECK(obj.type == Primitive::Type::kBox);
  for (const auto& obj : make_scene(9, 6, ObjectMix::kSpheresOnly).objects)
    CHECK(obj.type == Primitive::Type::kSphere);
}

TEST_CASE("ring_views: shorter lists are prefixes of longer ones") {
  auto v5 = ring_views(5, 3, 64, 64);
  auto v9 = ring_views(9, 3, 64, 64);
  REQUIRE(v5.size() == 5);
  REQUIRE(v9.size() == 9);
  for (int k = 0; k < 5; ++k) {
    CHECK((v5[k].pose.R - v9[k].pose.R).cwiseAbs().maxCoeff() == 0.0);
    CHECK((v5[k].pose.t - v9[k].pose.t).norm() == 0.0);
    CHECK(v5[k].K.fx == v9[k].K.fx);
  }
  for (const auto& v : v9) {
    v.K.validate();
    v.pose.validate();
    CHECK(v.pose.center().z() > 0.0); // upper hemisphere
  }
}

TEST_CASE("render_view: straight-down camera sees the table at depth 1") {
  Scene scene; // just the table
  scene.table_color = {10, 20, 30};
  Intrinsics K{100, 100, 32, 32, 64, 64};
  // Straight-down pose built by hand: camera z looks along world -z.
  Pose down;
  down.R.col(0) = Vec3(1, 0, 0);
  down.R.col(1) = Vec3(0, -1, 0);
  down.R.col(2) = Vec3(0, 0, -1);
  down.t = Vec3(0, 0, 1);
  down.validate();
  auto r = render_view(scene, K, down);
  CHECK(r.depth.at(32, 32) == doctest::Approx(1.0).epsilon(1e-12));
  // Off-center pixels hit the plane farther along the ray.
  CHECK(r.depth.at(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r.rgb.r.at(32, 32) == 10);
  CHECK(r.object_mask.at(32, 32) == 0);

  // A sphere at the optical axis: center pixel depth = height - radius.
  Primitive sph;
  sph.type = Primitive::Type::kSphere;
  sph.center = Vec3(0, 0, 0.1);
  sph.radius = 0.1;
  sph.color = {250, 1, 2};
  scene.objects.push_back(sph);
  auto r2 = render_view(scene, K, down);
  CHECK(r2.depth.at(32, 32) == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(r2.object_mask.at(32, 32) == 1);
  CHECK(r2.rgb.r.at(32, 32) == 250);
}

TEST_CASE("render_view: sphere silhouette radius matches the projection") {
  Scene scene;
  Primitive sph;
  sph.type = Primitive::Type::kSphere;
  sph.center = Vec3(0, 0, 0.1);
  sph.radius = 0.1;
  scene.objects.push_back(sph);
  Intrinsics K{200, 200, 64, 64, 128, 128};
  Pose down;
  down.R.col(0) = Vec3(1, 0, 0);
  down.R.col(1) = Vec3(0, -1, 0);
  down.R.col(2) = Vec3(0, 0, -1);
  down.t = Vec3(0, 0, 1.1); // 1.0 above the sphere center
  // Tangent ray: sin(theta) = rho/d; silhouette pixel radius =
  // fx * tan(theta) = fx * rho / sqrt(d^2 - rho^2).
  double d = 1.0, rho = 0.1;
  double expected = K.fx * rho / std::sqrt(d * d - rho * rho);
  auto r = render_view(scene, K, down);
  double max_r = 0.0;
  for (int y = 0; y < 128; ++y)
    for (int x = 0; x < 128; ++x)
      if (r.object_mask.at(x, y))
        max_r = std::max(max_r, std::hypot(x - 64.0, y - 64.0));
  CHECK(max_r > expected - 1.0);
  CHECK(max_r <= expected + 0.5);
}

TEST_CASE("rendered depth unprojects onto the scene surface") {
  Scene scene = make_scene(5, 4);
  auto views = ring_views(2, 5, 48, 48);
  for (const auto& cam : views) {
    auto r = render_view(scene, cam.K, cam.pose);
    double worst = 0.0;
    for (int y = 0; y < 48; ++y)
      for (int x = 0; x < 48; ++x) {
        double d = r.depth.at(x, y);
        if (!depth_valid(d)) continue;
        Vec3 p = unproject(Vec2(x, y), d, cam.K, cam.pose);
        worst = std::max(worst, surface_distance(scene, p));
      }
    CHECK(worst < 1e-9);
  }
}

TEST_CASE("make_observations is bit-deterministic") {
  Scene scene = make_scene(11, 3);
  auto rendered = render_views(scene, ring_views(3, 11, 48, 48));
  auto a = make_observations(scene, rendered,
                             PerturbationSpec::standard_noisy(), 77);
  auto b = make_observations(scene, rendered,
                             PerturbationSpec::standard_noisy(), 77);
  REQUIRE(a.predictions.size() == b.predictions.size());
  REQUIRE(a.raw.size() == b.raw.size());
  CHECK(a.alphas == b.alphas);
  for (size_t p = 0; p < a.predictions.size(); ++p) {
    CHECK(a.predictions[p].depth_i.data() == b.predictions[p].depth_i.data());
    CHECK(a.predictions[p].conf_j.data() == b.predictions[p].conf_j.data());
    REQUIRE(a.raw[p].size() == b.raw[p].size());
    for (size_t m = 0; m < a.raw[p].size(); ++m) {
      CHECK((a.raw[p][m].xi - b.raw[p][m].xi).norm() == 0.0);
      CHECK(a.raw[p][m].q == b.raw[p][m].q);
    }
  }
}

TEST_CASE("noiseless observations are exact: matches, depths, and alphas") {
  Scene scene = make_scene(13, 3);
  auto rendered = render_views(scene, ring_views(3, 13, 64, 64));
  auto obs = make_observations(scene, rendered, PerturbationSpec::none(), 5);
  REQUIRE(obs.predictions.size() == 3); // pairs (0,1) (0,2) (1,2)
  REQUIRE(obs.alphas.size() == 3);
  for (double a : obs.alphas) CHECK(a == 1.0);

  size_t n_matches = 0;
  for (size_t p = 0; p < obs.predictions.size(); ++p) {
    const auto& pred = obs.predictions[p];
    // Depth rasters equal ground truth exactly (alpha = 1, no noise).
    const auto& gt_i = rendered[pred.i].render.depth;
    for (size_t k = 0; k < gt_i.size(); ++k) {
      if (depth_valid(gt_i[k]))
        CHECK(pred.depth_i[k] == gt_i[k]);
      else
        CHECK(!depth_valid(pred.depth_i[k]));
    }
    // Matches triangulate onto the surface.
    const auto& ci = rendered[pred.i].cam;
    const auto& cj = rendered[pred.j].cam;
    for (size_t m = 0; m < obs.raw[p].size(); ++m) {
      const auto& c = obs.raw[p][m];
      CHECK(obs.outlier_labels[p][m] == 0);
      CHECK(c.q >= kInlierQMin);
      CHECK(c.q <= kInlierQMax);
      auto tri = try_triangulate(c.xi, ci.K, ci.pose, c.xj, cj.K, cj.pose);
      if (!tri) continue;
      CHECK(surface_distance(scene, tri->p_world) < 1e-9);
      ++n_matches;
    }
  }
  CHECK(n_matches > 200); // the harness yields dense support
}

TEST_CASE("outlier labels align with the confidence gate") {
  Scene scene = make_scene(17, 3);
  auto rendered = render_views(scene, ring_views(3, 17, 64, 64));
  PerturbationSpec spec;
  spec.rho_out = 0.2;
  auto obs = make_observations(scene, rendered, spec, 9);
  size_t n_out = 0, n_in = 0;
  for (size_t p = 0; p < obs.raw.size(); ++p) {
    REQUIRE(obs.outlier_labels[p].size() == obs.raw[p].size());
    for (size_t m = 0; m < obs.raw[p].size(); ++m) {
      if (obs.outlier_labels[p][m]) {
        ++n_out;
        CHECK(obs.raw[p][m].q <= kOutlierQMax);
      } else {
        ++n_in;
        CHECK(obs.raw[p][m].q >= kInlierQMin);
      }
    }
    // The benchmark threshold separates them exactly.
    auto kept = filter_matches(obs.predictions[p].i, obs.predictions[p].j,
                               obs.raw[p], 3.0);
    for (const auto& m : kept.matches) CHECK(m.q >= kInlierQMin);
  }
  CHECK(n_out > 0);
  // ~20% outliers requested
  double frac = double(n_out) / double(n_out + n_in);
  CHECK(frac > 0.1);
  CHECK(frac < 0.3);
}

TEST_CASE("eval_metrics: radially offset sphere samples score 1 mm") {
  Scene scene;
  Primitive sph;
  sph.type = Primitive::Type::kSphere;
  sph.center = Vec3(0, 0, 0.5);
  sph.radius = 0.1;
  scene.objects.push_back(sph);

  PointCloud cloud;
  int n = 5000; // ~2.8 mm lattice spacing, dense enough for 5 mm coverage
  double phi = std::numbers::pi * (3.0 - std::sqrt(5.0));
  for (int k = 0; k < n; ++k) {
    double z = 1.0 - 2.0 * (k + 0.5) / n;
    double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    Vec3 dir(r * std::cos(phi * k), r * std::sin(phi * k), z);
    CloudPoint p;
    // 1 mm outside the surface, radially: distance to sphere = 0.001 and
    // the table at z=0 stays >= 0.399 away, so it never wins the min.
    p.p = sph.center + dir * (sph.radius + 0.001);
    cloud.push_back(p);
  }
  auto rep = eval_metrics(cloud, scene);
  CHECK(rep.mean_dist == doctest::Approx(0.001).epsilon(1e-9));
  CHECK(rep.p95_dist == doctest::Approx(0.001).epsilon(1e-9));
  CHECK(rep.coverage_5mm > 0.95);
  CHECK(std::isnan(rep.rmse_matched));
  CHECK_THROWS_AS(eval_metrics(PointCloud{}, scene), EmptyCloud);
}

TEST_CASE("surface_distance agrees with hand values") {
  Scene scene;
  Primitive sph;
  sph.type = Primitive::Type::kSphere;
  sph.center = Vec3(0, 0, 0.5);
  sph.radius = 0.1;
  scene.objects.push_back(sph);
  // Table plane dominates near z=0; sphere dominates near it.
  CHECK(surface_distance(scene, Vec3(3, 3, 0.02)) ==
        doctest::Approx(0.02).epsilon(1e-12));
  CHECK(surface_distance(scene, Vec3(0, 0, 0.5)) ==
        doctest::Approx(0.1).epsilon(1e-12)); // center to its own surface
  CHECK(surface_distance(scene, Vec3(0, 0, 0.65)) ==
        doctest::Approx(0.05).epsilon(1e-12));

  Scene boxes;
  Primitive box;
  box.type = Primitive::Type::kBox;
  box.bmin = Vec3(-0.1, -0.1, 0.0);
  box.bmax = Vec3(0.1, 0.1, 0.2);
  boxes.objects.push_back(box);
  CHECK(surface_distance(boxes, Vec3(0.0, 0.0, 0.3)) ==
        doctest::Approx(0.1).epsilon(1e-12));
  CHECK(surface_distance(boxes, Vec3(0.2, 0.0, 0.1)) ==
        doctest::Approx(0.1).epsilon(1e-12));
}

TEST_CASE("sample_object_surfaces lies on surfaces at roughly the spacing") {
  Scene scene = make_scene(19, 4);
  auto pts = sample_object_surfaces(scene, 0.01);
  REQUIRE(pts.size() > 100);
  for (const auto& p : pts) {
    CHECK(surface_distance(scene, p) < 1e-9);
    CHECK(p.z() > -1e-12); // object surfaces sit on or above the table
  }
  // Finer spacing yields more samples.
  CHECK(sample_object_surfaces(scene, 0.005).size() > pts.size());
}

TEST_CASE("depth_rmse pools valid pixels across views") {
  DepthMap gt(2, 1, 1.0);
  DepthMap est(2, 1, 1.0);
  est.at(0, 0) = 1.3;
  est.at(1, 0) = invalid_depth(); // excluded
  DepthMap gt2(2, 1, 2.0);
  DepthMap est2(2, 1, 2.4);
  // residuals: 0.3 (view 0) and 0.4, 0.4 (view 1)
  double want = std::sqrt((0.09 + 0.16 + 0.16) / 3.0);
  CHECK(depth_rmse({est, est2}, {gt, gt2}) ==
        doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("scene json round-trips primitives") {
  TempDir dir("scene");
  Scene scene = make_scene(23, 5);
  std::string path = dir.file("scene.json");
  write_scene_json(path, scene, {1.0, 2.0, 0.5});
  Scene back = read_scene_json(path);
  REQUIRE(back.objects.size() == scene.objects.size());
  CHECK(back.seed == scene.seed);
  for (size_t k = 0; k < scene.objects.size(); ++k) {
    CHECK(back.objects[k].type == scene.objects[k].type);
    CHECK((back.objects[k].center - scene.objects[k].center).norm() == 0.0);
    CHECK(back.objects[k].radius == scene.objects[k].radius);
    CHECK((back.objects[k].bmin - scene.objects[k].bmin).norm() == 0.0);
    CHECK((back.objects[k].bmax - scene.objects[k].bmax).norm() == 0.0);
  }
}
