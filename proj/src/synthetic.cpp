// Copyright mgrecon authors. Apache 2.0 License.
#include "mgrecon/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include <json.hpp>

#include "mgrecon/parallel.hpp"
#include "mgrecon/rng.hpp"
#include "mgrecon/spatial_grid.hpp"

namespace mgrecon {

using nlohmann::json;

namespace {
constexpr double kDeg = std::numbers::pi / 180.0;

// RNG stream tags. Each (seed, tag, ...) tuple is an independent stream.
enum StreamTag : uint64_t {
  kTagScene = 10,
  kTagViews = 11,
  kTagAlpha = 1,
  kTagRaster = 2,
  kTagMatch = 3,
};

uint64_t pair_tag(int i, int j) {
  return (static_cast<uint64_t>(i) << 16) | static_cast<uint64_t>(j);
}
} // namespace

Scene make_scene(uint64_t seed, int n_objects, ObjectMix mix) {
  Scene scene;
  scene.seed = seed;
  Rng rng(mix_seed(seed, kTagScene));
  auto color = [&rng]() {
    return std::array<uint8_t, 3>{
        static_cast<uint8_t>(60 + rng.below(180)),
        static_cast<uint8_t>(60 + rng.below(180)),
        static_cast<uint8_t>(60 + rng.below(180))};
  };
  struct Placed {
    double x, y, r;
  };
  std::vector<Placed> placed;
  for (int k = 0; k < n_objects; ++k) {
    bool sphere = mix == ObjectMix::kSpheresOnly ||
                  (mix == ObjectMix::kMixed && rng.uniform() < 0.5);
    if (mix == ObjectMix::kBoxesOnly) sphere = false;
    // Rejection-sample (x, y) away from already placed objects; give up
    // after a few tries (overlap is harmless, just less pretty).
    double x = 0, y = 0, foot = 0;
    Primitive prim;
    if (sphere) {
      prim.type = Primitive::Type::kSphere;
      prim.radius = rng.uniform(0.035, 0.07);
      foot = prim.radius;
    } else {
      prim.type = Primitive::Type::kBox;
      foot = rng.uniform(0.03, 0.07);
    }
    for (int attempt = 0; attempt < 50; ++attempt) {
      x = rng.uniform(-0.15, 0.15);
      y = rng.uniform(-0.15, 0.15);
      bool clear = true;
      for (const auto& p : placed)
        if (std::hypot(x - p.x, y - p.y) < (foot + p.r + 0.01)) clear = false;
      if (clear) break;
    }
    placed.push_back({x, y, foot});
    if (sphere) {
      prim.center = Vec3(x, y, prim.radius); // resting on the table
    } else {
      double hy = rng.uniform(0.03, 0.07);
      double height = rng.uniform(0.03, 0.12);
      prim.bmin = Vec3(x - foot, y - hy, 0.0);
      prim.bmax = Vec3(x + foot, y + hy, height);
    }
    prim.color = color();
    scene.objects.push_back(prim);
  }
  return scene;
}

std::vector<CameraView> ring_views(int n, uint64_t seed, int width,
                                   int height, double fov_deg) {
  std::vector<CameraView> views;
  const Vec3 target(0.0, 0.0, 0.04);
  // 60 degree azimuth steps: six views close the ring, so further views
  // revisit old directions (with fresh jitter) and mostly densify coverage
  // rather than reveal new surface.
  for (int k = 0; k < n; ++k) {
    Rng rng(mix_seed(seed, kTagViews, static_cast<uint64_t>(k)));
    double az = (60.0 * k + rng.uniform(-2.0, 2.0)) * kDeg;
    double el = (50.0 + rng.uniform(-1.5, 1.5)) * kDeg;
    double rad = 0.875 + rng.uniform(-0.025, 0.025);
    Vec3 eye = target + rad * Vec3(std::cos(el) * std::cos(az),
                                   std::cos(el) * std::sin(az),
                                   std::sin(el));
    CameraView v;
    v.K.width = width;
    v.K.height = height;
    v.K.fy = height / (2.0 * std::tan(0.5 * fov_deg * kDeg));
    v.K.fx = v.K.fy;
    v.K.cx = (width - 1) * 0.5;
    v.K.cy = (height - 1) * 0.5;
    v.pose = look_at(eye, target);
    views.push_back(v);
  }
  return views;
}

namespace {

// Nearest intersection parameter along o + t*d (t equals camera-frame depth
// because d has unit camera z). Returns +inf on miss.
double hit_param(const Primitive& prim, const Vec3& o, const Vec3& d) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  switch (prim.type) {
    case Primitive::Type::kSphere: {
      Vec3 oc = o - prim.center;
      double a = d.squaredNorm();
      double b = 2.0 * d.dot(oc);
      double c = oc.squaredNorm() - prim.radius * prim.radius;
      double disc = b * b - 4.0 * a * c;
      if (disc < 0.0) return kInf;
      double sq = std::sqrt(disc);
      double t0 = (-b - sq) / (2.0 * a);
      double t1 = (-b + sq) / (2.0 * a);
      if (t0 > kZMin) return t0;
      if (t1 > kZMin) return t1;
      return kInf;
    }
    case Primitive::Type::kBox: {
      double tmin = -kInf, tmax = kInf;
      for (int ax = 0; ax < 3; ++ax) {
        if (d[ax] == 0.0) {
          if (o[ax] < prim.bmin[ax] || o[ax] > prim.bmax[ax]) return kInf;
          continue;
        }
        double t1 = (prim.bmin[ax] - o[ax]) / d[ax];
        double t2 = (prim.bmax[ax] - o[ax]) / d[ax];
        if (t1 > t2) std::swap(t1, t2);
        tmin = std::max(tmin, t1);
        tmax = std::min(tmax, t2);
        if (tmin > tmax) return kInf;
      }
      if (tmin > kZMin) return tmin;
      return kInf; // camera inside the box is not a valid configuration
    }
    case Primitive::Type::kPlane: {
      if (d.z() == 0.0) return kInf;
      double t = (prim.plane_z - o.z()) / d.z();
      return t > kZMin ? t : kInf;
    }
  }
  return kInf;
}

} // namespace

ViewRender render_view(const Scene& scene, const Intrinsics& K,
                       const Pose& pose) {
  ViewRender out;
  out.depth = DepthMap(K.width, K.height, invalid_depth());
  out.rgb = RgbImage{Grid2D<uint8_t>(K.width, K.height, 18),
                     Grid2D<uint8_t>(K.width, K.height, 18),
                     Grid2D<uint8_t>(K.width, K.height, 24)};
  out.object_mask = MaskImage(K.width, K.height, 0);
  Primitive table = scene.table();
  const Vec3 o = pose.center();
  parallel_for(static_cast<size_t>(K.height), [&](size_t y0, size_t y1) {
    for (size_t y = y0; y < y1; ++y) {
      for (int x = 0; x < K.width; ++x) {
        Vec3 d = pose.R * pixel_ray(Vec2(x, static_cast<double>(y)), K);
        double best = hit_param(table, o, d);
        const Primitive* who = best < std::numeric_limits<double>::infinity()
                                   ? &table
                                   : nullptr;
        for (const auto& prim : scene.objects) {
          double t = hit_param(prim, o, d);
          if (t < best) {
            best = t;
            who = &prim;
          }
        }
        if (who) {
          out.depth.at(x, y) = best;
          out.rgb.r.at(x, y) = who->color[0];
          out.rgb.g.at(x, y) = who->color[1];
          out.rgb.b.at(x, y) = who->color[2];
          out.object_mask.at(x, y) = who->type == Primitive::Type::kPlane ? 0 : 1;
        }
      }
    }
  });
  return out;
}

std::vector<RenderedView> render_views(const Scene& scene,
                                       const std::vector<CameraView>& views) {
  std::vector<RenderedView> out;
  out.reserve(views.size());
  for (const auto& v : views)
    out.push_back({v, render_view(scene, v.K, v.pose)});
  return out;
}

SceneObservations make_observations(const Scene& scene,
                                    const std::vector<RenderedView>& views,
                                    const PerturbationSpec& spec,
                                    uint64_t seed) {
  SceneObservations obs;
  const Primitive table = scene.table();
  // First surface hit along o + t*d over the whole scene; equals camera-frame
  // depth because d has unit camera z.
  auto first_hit = [&](const Vec3& o, const Vec3& d) {
    double best = hit_param(table, o, d);
    for (const auto& prim : scene.objects)
      best = std::min(best, hit_param(prim, o, d));
    return best;
  };
  const int n = static_cast<int>(views.size());
  obs.alphas.resize(n, 1.0);
  for (int v = 0; v < n; ++v) {
    if (spec.alpha_max > spec.alpha_min) {
      Rng rng(mix_seed(seed, kTagAlpha, static_cast<uint64_t>(v)));
      obs.alphas[v] = rng.log_uniform(spec.alpha_min, spec.alpha_max);
    } else {
      obs.alphas[v] = spec.alpha_min;
    }
  }

  const int stride = std::max(1, spec.match_stride);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      PairPrediction pred;
      pred.i = i;
      pred.j = j;
      for (int role = 0; role < 2; ++role) {
        int v = role == 0 ? i : j;
        const DepthMap& gt = views[v].render.depth;
        DepthMap depth(gt.width(), gt.height(), invalid_depth());
        ConfidenceMap conf(gt.width(), gt.height(), 0.0);
        Rng rng(mix_seed(seed, kTagRaster, pair_tag(i, j),
                         static_cast<uint64_t>(role)));
        for (size_t k = 0; k < gt.size(); ++k) {
          if (!depth_valid(gt[k])) continue;
          double factor = 1.0 + spec.sigma_d * rng.normal();
          factor = std::max(factor, 0.02);
          depth[k] = obs.alphas[v] * gt[k] * factor;
          // Calibrated confidence: decreases with the error actually
          // injected at this pixel, with jitter so it is not an oracle.
          double u = spec.sigma_d > 0.0
                         ? std::abs(factor - 1.0) / spec.sigma_d
                         : 0.0;
          conf[k] = std::clamp(kInlierQMax - 2.4 * u + rng.uniform(-0.8, 0.8),
                               kInlierQMin, kInlierQMax);
        }
        if (role == 0) {
          pred.depth_i = std::move(depth);
          pred.conf_i = std::move(conf);
        } else {
          pred.depth_j = std::move(depth);
          pred.conf_j = std::move(conf);
        }
      }

      std::vector<Correspondence> raw;
      std::vector<uint8_t> labels;
      Rng rng(mix_seed(seed, kTagMatch, pair_tag(i, j)));
      const auto& vi = views[i];
      const auto& vj = views[j];
      const DepthMap& gti = vi.render.depth;
      const DepthMap& gtj = vj.render.depth;
      const double wmaxj = vj.cam.K.width - 1.0;
      const double hmaxj = vj.cam.K.height - 1.0;
      for (int y = 0; y < gti.height(); y += stride) {
        for (int x = 0; x < gti.width(); x += stride) {
          double z = gti.at(x, y);
          if (!depth_valid(z)) continue;
          Vec3 p_w = unproject(Vec2(x, y), z, vi.cam.K, vi.cam.pose);
          auto proj = try_project(p_w, vj.cam.K, vj.cam.pose);
          if (!proj) continue;
          double u = proj->pix.x(), v = proj->pix.y();
          if (!(u >= 0.0 && u <= wmaxj && v >= 0.0 && v <= hmaxj)) continue;
          int rx = static_cast<int>(std::lround(u));
          int ry = static_cast<int>(std::lround(v));
          if (!depth_valid(gtj.at(rx, ry))) continue;
          // Covisibility: cast the target view's ray through the continuous
          // projection; the point is visible iff it is the first surface hit.
          // The scene is analytic, so the test is exact up to roundoff.
          Vec3 dj = vj.cam.pose.R * pixel_ray(proj->pix, vj.cam.K);
          double tj = first_hit(vj.cam.pose.center(), dj);
          if (!(std::abs(tj - proj->depth) <= 1e-9 * proj->depth)) continue;
          Correspondence c;
          bool outlier = rng.uniform() < spec.rho_out;
          if (outlier) {
            c.xi = Vec2(x, y);
            c.xj = Vec2(rng.uniform() * wmaxj, rng.uniform() * hmaxj);
            c.q = rng.uniform(kOutlierQMin, kOutlierQMax);
          } else {
            auto clampx = [&](double a, double hi) {
              return std::clamp(a, 0.0, hi);
            };
            double n1 = rng.normal(), n2 = rng.normal();
            double n3 = rng.normal(), n4 = rng.normal();
            c.xi = Vec2(clampx(x + spec.sigma_px * n1, gti.width() - 1.0),
                        clampx(y + spec.sigma_px * n2, gti.height() - 1.0));
            c.xj = Vec2(clampx(u + spec.sigma_px * n3, wmaxj),
                        clampx(v + spec.sigma_px * n4, hmaxj));
            // Calibrated matching confidence: high when the injected
            // endpoint displacement is small (in sigma units).
            double e = spec.sigma_px > 0.0
                           ? std::sqrt(n1 * n1 + n2 * n2 + n3 * n3 + n4 * n4)
                           : 0.0;
            c.q = std::clamp(kInlierQMax - 1.5 * e + rng.uniform(-0.8, 0.8),
                             kInlierQMin, kInlierQMax);
          }
          raw.push_back(c);
          labels.push_back(outlier ? 1 : 0);
        }
      }
      obs.predictions.push_back(std::move(pred));
      obs.raw.push_back(std::move(raw));
      obs.outlier_labels.push_back(std::move(labels));
    }
  }
  return obs;
}

double surface_distance(const Scene& scene, const Vec3& p) {
  auto dist_one = [&](const Primitive& prim) {
    switch (prim.type) {
      case Primitive::Type::kSphere:
        return std::abs((p - prim.center).norm() - prim.radius);
      case Primitive::Type::kBox: {
        Vec3 q = (prim.bmin - p).cwiseMax(p - prim.bmax);
        double mx = q.maxCoeff();
        if (mx <= 0.0) return -mx; // inside: distance to the nearest face
        return q.cwiseMax(0.0).norm();
      }
      case Primitive::Type::kPlane:
        return std::abs(p.z() - prim.plane_z);
    }
    return std::numeric_limits<double>::infinity();
  };
  double best = dist_one(scene.table());
  for (const auto& prim : scene.objects)
    best = std::min(best, dist_one(prim));
  return best;
}

std::vector<Vec3> sample_object_surfaces(const Scene& scene, double spacing) {
  std::vector<Vec3> pts;
  for (const auto& prim : scene.objects) {
    if (prim.type == Primitive::Type::kSphere) {
      double area = 4.0 * std::numbers::pi * prim.radius * prim.radius;
      int n = std::max(32, static_cast<int>(std::lround(area / (spacing * spacing))));
      // Fibonacci sphere lattice
      double ga = std::numbers::pi * (3.0 - std::sqrt(5.0));
      for (int k = 0; k < n; ++k) {
        double zf = 1.0 - 2.0 * (k + 0.5) / n;
        double rf = std::sqrt(std::max(0.0, 1.0 - zf * zf));
        double phi = ga * k;
        pts.push_back(prim.center + prim.radius * Vec3(rf * std::cos(phi),
                                                       rf * std::sin(phi), zf));
      }
    } else if (prim.type == Primitive::Type::kBox) {
      Vec3 ext = prim.bmax - prim.bmin;
      auto steps = [&](double len) {
        return std::max(2, static_cast<int>(std::ceil(len / spacing)) + 1);
      };
      int nx = steps(ext.x()), ny = steps(ext.y()), nz = steps(ext.z());
      auto lerpc = [&](int k, int n, int ax) {
        return prim.bmin[ax] + ext[ax] * (n == 1 ? 0.5 : double(k) / (n - 1));
      };
      for (int face = 0; face < 6; ++face) {
        int ax = face / 2; // fixed axis
        double fixed = (face % 2 == 0) ? prim.bmin[ax] : prim.bmax[ax];
        int a1 = (ax + 1) % 3, a2 = (ax + 2) % 3;
        int n1 = ax == 0 ? ny : ax == 1 ? nz : nx;
        int n2 = ax == 0 ? nz : ax == 1 ? nx : ny;
        for (int k1 = 0; k1 < n1; ++k1)
          for (int k2 = 0; k2 < n2; ++k2) {
            Vec3 p;
            p[ax] = fixed;
            p[a1] = lerpc(k1, n1, a1);
            p[a2] = lerpc(k2, n2, a2);
            pts.push_back(p);
          }
      }
    }
  }
  return pts;
}

EvalReport eval_metrics(const PointCloud& cloud, const Scene& scene) {
  if (cloud.empty()) throw EmptyCloud("eval_metrics: empty point cloud");
  EvalReport rep;
  std::vector<double> dists(cloud.size());
  for (size_t k = 0; k < cloud.size(); ++k)
    dists[k] = surface_distance(scene, cloud[k].p);
  double sum = 0.0;
  for (double d : dists) sum += d;
  rep.mean_dist = sum / dists.size();
  std::vector<double> sorted = dists;
  std::sort(sorted.begin(), sorted.end());
  rep.p95_dist = sorted[static_cast<size_t>(0.95 * (sorted.size() - 1))];

  auto refs = sample_object_surfaces(scene, 0.003);
  if (!refs.empty()) {
    SpatialGrid grid(cloud, 0.005);
    size_t covered = 0;
    for (const auto& r : refs)
      if (grid.any_within(r, 0.005)) ++covered;
    rep.coverage_5mm = static_cast<double>(covered) / refs.size();
  }
  return rep;
}

double depth_rmse(const std::vector<DepthMap>& depth,
                  const std::vector<DepthMap>& gt) {
  double sum = 0.0;
  size_t n = 0;
  for (size_t v = 0; v < depth.size() && v < gt.size(); ++v) {
    for (size_t k = 0; k < depth[v].size(); ++k) {
      if (!depth_valid(depth[v][k]) || !depth_valid(gt[v][k])) continue;
      double e = depth[v][k] - gt[v][k];
      sum += e * e;
      ++n;
    }
  }
  return n == 0 ? std::numeric_limits<double>::quiet_NaN()
                : std::sqrt(sum / n);
}

void write_scene_json(const std::string& path, const Scene& scene,
                      const std::vector<double>& alphas) {
  json objects = json::array();
  for (const auto& prim : scene.objects) {
    json o;
    o["color"] = {prim.color[0], prim.color[1], prim.color[2]};
    if (prim.type == Primitive::Type::kSphere) {
      o["type"] = "sphere";
      o["center"] = {prim.center.x(), prim.center.y(), prim.center.z()};
      o["radius"] = prim.radius;
    } else if (prim.type == Primitive::Type::kBox) {
      o["type"] = "box";
      o["min"] = {prim.bmin.x(), prim.bmin.y(), prim.bmin.z()};
      o["max"] = {prim.bmax.x(), prim.bmax.y(), prim.bmax.z()};
    } else {
      o["type"] = "plane";
      o["z"] = prim.plane_z;
    }
    objects.push_back(o);
  }
  json root = {{"seed", scene.seed},
               {"table_color",
                {scene.table_color[0], scene.table_color[1], scene.table_color[2]}},
               {"objects", objects},
               {"alphas", alphas}};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << root.dump(2) << "\n";
}

Scene read_scene_json(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifact("cannot open " + path);
  json root;
  try {
    in >> root;
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  Scene scene;
  try {
    scene.seed = root.value("seed", 0ULL);
    if (root.contains("table_color"))
      for (int k = 0; k < 3; ++k)
        scene.table_color[k] = root["table_color"][k].get<uint8_t>();
    for (const auto& o : root.at("objects")) {
      Primitive prim;
      std::string type = o.at("type").get<std::string>();
      if (o.contains("color"))
        for (int k = 0; k < 3; ++k) prim.color[k] = o["color"][k].get<uint8_t>();
      if (type == "sphere") {
        prim.type = Primitive::Type::kSphere;
        for (int k = 0; k < 3; ++k) prim.center[k] = o.at("center")[k].get<double>();
        prim.radius = o.at("radius").get<double>();
      } else if (type == "box") {
        prim.type = Primitive::Type::kBox;
        for (int k = 0; k < 3; ++k) {
          prim.bmin[k] = o.at("min")[k].get<double>();
          prim.bmax[k] = o.at("max")[k].get<double>();
        }
      } else if (type == "plane") {
        prim.type = Primitive::Type::kPlane;
        prim.plane_z = o.at("z").get<double>();
      } else {
        throw ParseError(path + ": unknown primitive type " + type);
      }
      scene.objects.push_back(prim);
    }
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  return scene;
}

} // namespace mgrecon
