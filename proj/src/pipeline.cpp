// Copyright mgrecon authors. Apache 2.0 License.
#include "mgrecon/pipeline.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <utility>

#include <json.hpp>

#include "mgrecon/errors.hpp"

namespace mgrecon {
namespace {

using nlohmann::json;

struct StageClock {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double lap() {
    auto t1 = std::chrono::steady_clock::now();
    double dt = std::chrono::duration<double>(t1 - t0).count();
    t0 = t1;
    return dt;
  }
};

template <typename F>
void stage(const char* name, F&& body) {
  try {
    body();
  } catch (const std::exception& e) {
    throw PipelineError(std::string(name) + ": " + e.what());
  }
}

std::string join(const std::string& dir, const std::string& rel) {
  if (dir.empty()) return rel;
  return dir.back() == '/' ? dir + rel : dir + "/" + rel;
}

void check_inputs(const PipelineInputs& in) {
  const size_t n = in.cams.size();
  if (n < 2) throw PipelineError("inputs: need at least two views");
  if (in.rgb.size() != n || in.seg.size() != n)
    throw PipelineError("inputs: rgb/seg view count mismatch");
  if (in.raw.size() != in.predictions.size())
    throw PipelineError("inputs: raw matches not parallel to predictions");
}

} // namespace

PipelineConfig PipelineConfig::for_profile(const std::string& name) {
  PipelineConfig c; // benchmark defaults
  c.profile = name;
  if (name == "benchmark") return c;
  if (name == "real") {
    c.tau_Q = 1.0;
    c.tau_C = 1.0;
    c.N_c = 100;
    c.r = 0.05;
    c.n_min = 300;
    return c;
  }
  throw ConfigError("unknown profile: " + name);
}

GraspParams PipelineConfig::grasp_params() const {
  GraspParams g;
  g.ball_radius = ball_radius;
  g.ball_cap = ball_cap;
  g.w_max = w_max;
  g.n_pts_min = n_pts_min;
  g.nms_delta_t = delta_t;
  g.nms_delta_r = delta_R_deg * std::numbers::pi / 180.0;
  g.keep = keep;
  return g;
}

RefinementConfig PipelineConfig::refine_config() const {
  RefinementConfig rc;
  rc.delta_3d = delta_3D;
  rc.delta_2d = delta_2D;
  rc.n_3d = N_3D;
  rc.n_2d = N_2D;
  return rc;
}

void apply_config_file(const std::string& path, PipelineConfig& cfg,
                       SynthConfig& synth, uint64_t& seed, int& threads,
                       bool honor_profile_key) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifact("config file not found: " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  if (!j.is_object()) throw ConfigError(path + ": top level must be an object");
  if (j.contains("profile") && honor_profile_key) {
    std::string want = j.at("profile").get<std::string>();
    if (want != cfg.profile) cfg = PipelineConfig::for_profile(want);
  }
  for (const auto& [key, val] : j.items()) {
    try {
      if (key == "profile") continue; // handled above
      else if (key == "tau_Q") cfg.tau_Q = val.get<double>();
      else if (key == "tau_C") cfg.tau_C = val.get<double>();
      else if (key == "delta_3D") cfg.delta_3D = val.get<double>();
      else if (key == "delta_2D") cfg.delta_2D = val.get<double>();
      else if (key == "N_3D") cfg.N_3D = val.get<int>();
      else if (key == "N_2D") cfg.N_2D = val.get<int>();
      else if (key == "r") cfg.r = val.get<double>();
      else if (key == "n_min") cfg.n_min = val.get<int>();
      else if (key == "N_c") cfg.N_c = val.get<int>();
      else if (key == "ball_radius") cfg.ball_radius = val.get<double>();
      else if (key == "delta_t") cfg.delta_t = val.get<double>();
      else if (key == "delta_R_deg") cfg.delta_R_deg = val.get<double>();
      else if (key == "w_max") cfg.w_max = val.get<double>();
      else if (key == "voxel") cfg.voxel = val.get<double>();
      else if (key == "n_pts_min") cfg.n_pts_min = val.get<int>();
      else if (key == "keep") cfg.keep = val.get<int>();
      else if (key == "ball_cap") cfg.ball_cap = val.get<int>();
      else if (key == "n_support_min") cfg.n_support_min = val.get<int>();
      else if (key == "views") synth.views = val.get<int>();
      else if (key == "width") synth.width = val.get<int>();
      else if (key == "height") synth.height = val.get<int>();
      else if (key == "objects") synth.objects = val.get<int>();
      else if (key == "alpha_min") synth.spec.alpha_min = val.get<double>();
      else if (key == "alpha_max") synth.spec.alpha_max = val.get<double>();
      else if (key == "sigma_d") synth.spec.sigma_d = val.get<double>();
      else if (key == "sigma_px") synth.spec.sigma_px = val.get<double>();
      else if (key == "rho_out") synth.spec.rho_out = val.get<double>();
      else if (key == "match_stride") synth.spec.match_stride = val.get<int>();
      else if (key == "seed") seed = val.get<uint64_t>();
      else if (key == "threads") threads = val.get<int>();
      else throw ConfigError("unknown config key: " + key);
    } catch (const json::exception& e) {
      throw ConfigError(path + ": bad value for \"" + key + "\": " + e.what());
    }
  }
}

std::vector<CorrespondenceSet> filter_all(
    const std::vector<std::vector<Correspondence>>& raw,
    const std::vector<PairPrediction>& predictions, double tau_Q) {
  if (raw.size() != predictions.size())
    throw DimensionMismatch("raw matches not parallel to predictions");
  std::vector<CorrespondenceSet> sets;
  sets.reserve(raw.size());
  for (size_t k = 0; k < raw.size(); ++k)
    sets.push_back(
        filter_matches(predictions[k].i, predictions[k].j, raw[k], tau_Q));
  return sets;
}

PipelineResult run_pipeline_mem(const PipelineInputs& in,
                                const PipelineConfig& cfg,
                                const PipelineOptions& opt) {
  check_inputs(in);
  const int n_views = static_cast<int>(in.cams.size());
  PipelineResult r;
  StageClock clock, total;

  stage("aggregation_correspondence", [&] {
    r.sets = filter_all(in.raw, in.predictions, cfg.tau_Q);
    r.zhat.reserve(n_views);
    r.chat.reserve(n_views);
    for (int v = 0; v < n_views; ++v) {
      auto [z, c] = aggregate_depth(in.predictions, v);
      r.zhat.push_back(std::move(z));
      r.chat.push_back(std::move(c));
    }
  });
  r.timings.push_back({"aggregation_correspondence", clock.lap()});

  stage("scale_recovery", [&] {
    if (opt.skip_scale) {
      for (int v = 0; v < n_views; ++v) r.scales.push_back({v, 1.0, 0});
    } else {
      r.scales = recover_view_scales(r.sets, in.cams, r.zhat,
                                     cfg.n_support_min, &r.tri_drops);
    }
    r.ztilde.reserve(n_views);
    for (int v = 0; v < n_views; ++v)
      r.ztilde.push_back(apply_scale(r.zhat[v], r.scales[v].s));
  });
  r.timings.push_back({"scale_recovery", clock.lap()});

  stage("refinement", [&] {
    if (opt.skip_refine) {
      r.zstar = r.ztilde;
      return;
    }
    std::vector<RefineViewInput> rv;
    rv.reserve(n_views);
    for (int v = 0; v < n_views; ++v)
      rv.push_back({in.cams[v].K, in.cams[v].pose, r.ztilde[v]});
    RefinementProblem problem(std::move(rv), r.sets, cfg.delta_3D,
                              cfg.delta_2D);
    r.trace = optimize(problem, cfg.refine_config()).trace;
    r.zstar = problem.bake();
  });
  r.timings.push_back({"refinement", clock.lap()});

  stage("guidance_fusion", [&] {
    r.valid.reserve(n_views);
    for (int v = 0; v < n_views; ++v)
      r.valid.push_back(
          valid_mask(v, r.sets, r.chat[v], in.seg[v], cfg.tau_C));
    std::vector<FusionViewInput> fv;
    fv.reserve(n_views);
    for (int v = 0; v < n_views; ++v)
      fv.push_back({in.cams[v].K, in.cams[v].pose, &r.zstar[v], &in.rgb[v],
                    &r.valid[v]});
    r.cloud_raw = fuse(fv);
    r.cloud = radius_filter(r.cloud_raw, cfg.r, cfg.n_min);
    if (cfg.voxel > 0.0) r.cloud = voxel_downsample(r.cloud, cfg.voxel);
  });
  r.timings.push_back({"guidance_fusion", clock.lap()});

  stage("grasp_generation", [&] {
    r.grasps = generate_grasps(r.cloud, cfg.N_c, cfg.grasp_params());
  });
  r.timings.push_back({"grasp_generation", clock.lap()});

  r.total_seconds = total.lap();
  return r;
}

std::string view_raster_name(int view, const std::string& kind) {
  char buf[64];
  if (kind.empty())
    std::snprintf(buf, sizeof(buf), "view_%03d.pfm", view);
  else
    std::snprintf(buf, sizeof(buf), "view_%03d_%s.pfm", view, kind.c_str());
  return buf;
}

std::vector<PairPrediction> load_predictions(
    const std::string& dir, int n_views,
    std::vector<std::vector<Correspondence>>* raw) {
  FileBackend backend(dir);
  std::vector<PairPrediction> predictions;
  if (raw) raw->clear();
  for (int i = 0; i < n_views; ++i)
    for (int j = i + 1; j < n_views; ++j) {
      PairObservation obs = backend.produce_pair(i, j);
      predictions.push_back(std::move(obs.prediction));
      if (raw) raw->push_back(std::move(obs.raw_matches));
    }
  return predictions;
}

void write_scales_json(const std::string& path,
                       const std::vector<ScaleEstimate>& scales) {
  json arr = json::array();
  for (const auto& s : scales)
    arr.push_back({{"view", s.view}, {"s", s.s}, {"n_support", s.n_support}});
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << arr.dump(2) << "\n";
}

std::vector<ScaleEstimate> read_scales_json(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifact("scales file not found: " + path);
  json arr;
  try {
    arr = json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  std::vector<ScaleEstimate> scales;
  for (const auto& e : arr)
    scales.push_back({e.at("view").get<int>(), e.at("s").get<double>(),
                      e.at("n_support").get<int>()});
  return scales;
}

void write_losses_csv(const std::string& path,
                      const std::vector<TraceRow>& trace) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << "iteration,stage,loss,step\n";
  char buf[128];
  for (const auto& row : trace) {
    std::snprintf(buf, sizeof(buf), "%d,%d,%.17g,%.17g\n", row.iteration,
                  row.stage, row.loss, row.step);
    out << buf;
  }
}

void write_timings_json(const std::string& path,
                        const std::vector<StageTiming>& timings,
                        double total_seconds) {
  json stages = json::array();
  for (const auto& t : timings) {
    double pct = total_seconds > 0.0 ? 100.0 * t.seconds / total_seconds : 0.0;
    stages.push_back(
        {{"name", t.name}, {"seconds", t.seconds}, {"percent", pct}});
  }
  json doc = {{"stages", stages}, {"total_seconds", total_seconds}};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << doc.dump(2) << "\n";
}

PipelineResult run_pipeline(const std::string& in_dir,
                            const std::string& out_dir,
                            const PipelineConfig& cfg,
                            const PipelineOptions& opt) {
  ensure_dir(out_dir);
  PipelineResult r;
  StageClock clock, total;

  PipelineInputs in;
  stage("masking_load", [&] {
    in.cams = read_cameras_json(join(in_dir, "cameras.json"));
    const int n_views = static_cast<int>(in.cams.size());
    char name[64];
    for (int v = 0; v < n_views; ++v) {
      std::snprintf(name, sizeof(name), "rgb/view_%03d.ppm", v);
      in.rgb.push_back(read_ppm(join(in_dir, name)));
      std::snprintf(name, sizeof(name), "masks/view_%03d.pgm", v);
      in.seg.push_back(read_pgm(join(in_dir, name)));
    }
    in.predictions = load_predictions(in_dir, n_views, &in.raw);
  });
  r.timings.push_back({"masking_load", clock.lap()});
  check_inputs(in);
  const int n_views = static_cast<int>(in.cams.size());

  stage("aggregation_correspondence", [&] {
    r.sets = filter_all(in.raw, in.predictions, cfg.tau_Q);
    for (int v = 0; v < n_views; ++v) {
      auto [z, c] = aggregate_depth(in.predictions, v);
      r.zhat.push_back(std::move(z));
      r.chat.push_back(std::move(c));
    }
    ensure_dir(join(out_dir, "aggregated"));
    for (int v = 0; v < n_views; ++v) {
      write_pfm(join(out_dir, "aggregated/" + view_raster_name(v, "depth")),
                r.zhat[v]);
      write_pfm(join(out_dir, "aggregated/" + view_raster_name(v, "conf")),
                r.chat[v]);
    }
  });
  r.timings.push_back({"aggregation_correspondence", clock.lap()});

  stage("scale_recovery", [&] {
    if (opt.skip_scale) {
      for (int v = 0; v < n_views; ++v) r.scales.push_back({v, 1.0, 0});
    } else {
      r.scales = recover_view_scales(r.sets, in.cams, r.zhat,
                                     cfg.n_support_min, &r.tri_drops);
    }
    for (int v = 0; v < n_views; ++v)
      r.ztilde.push_back(apply_scale(r.zhat[v], r.scales[v].s));
    write_scales_json(join(out_dir, "scales.json"), r.scales);
    ensure_dir(join(out_dir, "scaled"));
    for (int v = 0; v < n_views; ++v)
      write_pfm(join(out_dir, "scaled/" + view_raster_name(v, "")),
                r.ztilde[v]);
  });
  r.timings.push_back({"scale_recovery", clock.lap()});

  stage("refinement", [&] {
    if (opt.skip_refine) {
      r.zstar = r.ztilde;
    } else {
      std::vector<RefineViewInput> rv;
      for (int v = 0; v < n_views; ++v)
        rv.push_back({in.cams[v].K, in.cams[v].pose, r.ztilde[v]});
      RefinementProblem problem(std::move(rv), r.sets, cfg.delta_3D,
                                cfg.delta_2D);
      r.trace = optimize(problem, cfg.refine_config()).trace;
      r.zstar = problem.bake();
    }
    ensure_dir(join(out_dir, "refined"));
    for (int v = 0; v < n_views; ++v)
      write_pfm(join(out_dir, "refined/" + view_raster_name(v, "")),
                r.zstar[v]);
    write_losses_csv(join(out_dir, "losses.csv"), r.trace);
  });
  r.timings.push_back({"refinement", clock.lap()});

  stage("guidance_fusion", [&] {
    for (int v = 0; v < n_views; ++v)
      r.valid.push_back(
          valid_mask(v, r.sets, r.chat[v], in.seg[v], cfg.tau_C));
    std::vector<FusionViewInput> fv;
    for (int v = 0; v < n_views; ++v)
      fv.push_back({in.cams[v].K, in.cams[v].pose, &r.zstar[v], &in.rgb[v],
                    &r.valid[v]});
    r.cloud_raw = fuse(fv);
    r.cloud = radius_filter(r.cloud_raw, cfg.r, cfg.n_min);
    if (cfg.voxel > 0.0) r.cloud = voxel_downsample(r.cloud, cfg.voxel);
    write_ply(join(out_dir, "cloud.ply"), r.cloud);
  });
  r.timings.push_back({"guidance_fusion", clock.lap()});

  stage("grasp_generation", [&] {
    r.grasps = generate_grasps(r.cloud, cfg.N_c, cfg.grasp_params());
    write_grasps_json(join(out_dir, "grasps.json"), r.grasps);
  });
  r.timings.push_back({"grasp_generation", clock.lap()});

  r.total_seconds = total.lap();
  write_timings_json(join(out_dir, "timings.json"), r.timings,
                     r.total_seconds);
  return r;
}

void write_scene_dir(const std::string& dir, const Scene& scene,
                     const std::vector<RenderedView>& views,
                     const SceneObservations& obs) {
  ensure_dir(dir);
  ensure_dir(join(dir, "rgb"));
  ensure_dir(join(dir, "masks"));
  ensure_dir(join(dir, "gt"));
  ensure_dir(join(dir, "obs"));

  std::vector<CameraView> cams;
  cams.reserve(views.size());
  for (const auto& v : views) cams.push_back(v.cam);
  write_cameras_json(join(dir, "cameras.json"), cams);
  write_scene_json(join(dir, "scene.json"), scene, obs.alphas);

  char name[64];
  for (size_t v = 0; v < views.size(); ++v) {
    std::snprintf(name, sizeof(name), "rgb/view_%03zu.ppm", v);
    write_ppm(join(dir, name), views[v].render.rgb);
    std::snprintf(name, sizeof(name), "masks/view_%03zu.pgm", v);
    write_pgm(join(dir, name), views[v].render.object_mask);
    std::snprintf(name, sizeof(name), "gt/depth_%03zu.pfm", v);
    write_pfm(join(dir, name), views[v].render.depth);
  }

  std::vector<RawMatch> flat;
  for (size_t k = 0; k < obs.predictions.size(); ++k) {
    const PairPrediction& p = obs.predictions[k];
    write_pfm(join(dir, "obs/" + pair_raster_name(p.i, p.j, "depth", p.i)),
              p.depth_i);
    write_pfm(join(dir, "obs/" + pair_raster_name(p.i, p.j, "depth", p.j)),
              p.depth_j);
    write_pfm(join(dir, "obs/" + pair_raster_name(p.i, p.j, "conf", p.i)),
              p.conf_i);
    write_pfm(join(dir, "obs/" + pair_raster_name(p.i, p.j, "conf", p.j)),
              p.conf_j);
    for (const auto& c : obs.raw[k])
      flat.push_back({p.i, p.j, c.xi, c.xj, c.q});
  }
  write_matches_jsonl(join(dir, "matches.jsonl"), flat);
}

std::vector<SweepRow> sweep_views(uint64_t seed, int views_min, int views_max,
                                  const PipelineConfig& cfg,
                                  const SynthConfig& synth) {
  if (views_min < 2 || views_max < views_min)
    throw ConfigError("sweep needs 2 <= views_min <= views_max");
  Scene scene = make_scene(seed, synth.objects);
  std::vector<SweepRow> rows;
  for (int n = views_min; n <= views_max; ++n) {
    auto cams = ring_views(n, seed, synth.width, synth.height);
    auto views = render_views(scene, cams);
    auto obs = make_observations(scene, views, synth.spec, seed);
    PipelineInputs in;
    for (const auto& v : views) {
      in.cams.push_back(v.cam);
      in.rgb.push_back(v.render.rgb);
      in.seg.push_back(v.render.object_mask);
    }
    in.predictions = obs.predictions;
    in.raw = obs.raw;
    StageClock clock;
    PipelineResult result = run_pipeline_mem(in, cfg, {});
    double runtime = clock.lap();
    EvalReport report = eval_metrics(result.cloud, scene);
    rows.push_back({n, report.mean_dist, report.coverage_5mm, runtime});
  }
  return rows;
}

void write_sweep_csv(const std::string& path,
                     const std::vector<SweepRow>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << "n_views,mean_dist,coverage_5mm,runtime_s\n";
  char buf[128];
  for (const auto& row : rows) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.6f\n", row.n_views,
                  row.mean_dist, row.coverage, row.runtime_s);
    out << buf;
  }
}

EvalReport evaluate_dirs(const std::string& scene_dir,
                         const std::string& result_dir) {
  Scene scene = read_scene_json(join(scene_dir, "scene.json"));
  PointCloud cloud = read_ply(join(result_dir, "cloud.ply"));
  EvalReport report = eval_metrics(cloud, scene);

  const std::string cams_path = join(scene_dir, "cameras.json");
  if (file_exists(cams_path)) {
    const int n_views =
        static_cast<int>(read_cameras_json(cams_path).size());
    std::vector<DepthMap> refined, gt;
    bool have_all = n_views > 0;
    char name[64];
    for (int v = 0; v < n_views && have_all; ++v) {
      std::string rp = join(result_dir, "refined/" + view_raster_name(v, ""));
      std::snprintf(name, sizeof(name), "gt/depth_%03d.pfm", v);
      std::string gp = join(scene_dir, name);
      if (!file_exists(rp) || !file_exists(gp)) {
        have_all = false;
        break;
      }
      refined.push_back(read_pfm(rp));
      gt.push_back(read_pfm(gp));
    }
    if (have_all) report.rmse_matched = depth_rmse(refined, gt);
  }
  return report;
}

} // namespace mgrecon
