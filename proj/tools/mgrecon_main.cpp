// Copyright mgrecon authors. Apache 2.0 License.
//
// mgrecon: multi-view metric depth recovery and grasp proposal CLI.
// Subcommands either run the full pipeline on a scene directory or execute
// one stage against the directory's persisted artifacts.

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mgrecon/errors.hpp"
#include "mgrecon/parallel.hpp"
#include "mgrecon/pipeline.hpp"

namespace {

using namespace mgrecon;

std::string join(const std::string& dir, const std::string& rel) {
  if (dir.empty()) return rel;
  return dir.back() == '/' ? dir + rel : dir + "/" + rel;
}

struct GlobalArgs {
  uint64_t seed = 0;
  int threads = 0; // 0 = hardware default
  std::string config_path;
  std::string profile; // empty = env MGRECON_PROFILE or "benchmark"
};

// defaults -> profile (env, then flag) -> config file -> explicit flags.
// The CLI11 app is consulted for which flags the user actually passed so
// they can re-override the file.
PipelineConfig resolve_config(const CLI::App& app, const GlobalArgs& g,
                              SynthConfig* synth, uint64_t* seed,
                              int* threads) {
  std::string profile = "benchmark";
  if (const char* env = std::getenv("MGRECON_PROFILE"); env && *env)
    profile = env;
  if (!g.profile.empty()) profile = g.profile;
  PipelineConfig cfg = PipelineConfig::for_profile(profile);

  SynthConfig synth_local;
  SynthConfig& s = synth ? *synth : synth_local;
  uint64_t seed_val = g.seed;
  int threads_val = g.threads;
  if (!g.config_path.empty())
    apply_config_file(g.config_path, cfg, s, seed_val, threads_val,
                      /*honor_profile_key=*/app.count("--profile") == 0);
  // Explicit CLI flags beat the file.
  if (app.count("--seed") > 0) seed_val = g.seed;
  if (app.count("--threads") > 0) threads_val = g.threads;
  if (seed) *seed = seed_val;
  if (threads) *threads = threads_val;
  thread_cap() = threads_val;
  return cfg;
}

void add_override_flags(CLI::App* cmd, PipelineConfig& cfg) {
  cmd->add_option("--tau-q", cfg.tau_Q, "Match confidence floor (strict >)");
  cmd->add_option("--tau-c", cfg.tau_C, "Fusion confidence floor (strict >)");
  cmd->add_option("--r", cfg.r, "Radius filter radius, meters");
  cmd->add_option("--n-min", cfg.n_min, "Radius filter neighbor floor");
  cmd->add_option("--n-c", cfg.N_c, "Grasp region centers");
  cmd->add_option("--n-3d", cfg.N_3D, "Stage-1 refinement iterations");
  cmd->add_option("--n-2d", cfg.N_2D, "Stage-2 refinement iterations");
  cmd->add_option("--n-support-min", cfg.n_support_min,
                  "Minimum matches for scale support");
  cmd->add_option("--voxel", cfg.voxel, "Voxel downsample size, 0 = off");
}

int run(int argc, char** argv) {
  CLI::App app{"Multi-view metric depth recovery and grasp proposals"};
  app.require_subcommand(1);

  GlobalArgs g;
  app.add_option("--seed", g.seed, "Deterministic seed")->capture_default_str();
  app.add_option("--threads", g.threads,
                 "Worker thread cap, 0 = hardware default")
      ->capture_default_str();
  app.add_option("--config", g.config_path, "Flat JSON config file");
  app.add_option("--profile", g.profile,
                 "Parameter bundle: benchmark or real (default from "
                 "MGRECON_PROFILE, else benchmark)");

  // synth
  auto* synth_cmd = app.add_subcommand(
      "synth", "Render a synthetic tabletop scene directory");
  std::string synth_out;
  SynthConfig synth_flags;
  std::string mix = "mixed";
  synth_cmd->add_option("--out", synth_out, "Scene directory to create")
      ->required();
  synth_cmd->add_option("--views", synth_flags.views, "Ring view count")
      ->capture_default_str();
  synth_cmd->add_option("--width", synth_flags.width, "Image width")
      ->capture_default_str();
  synth_cmd->add_option("--height", synth_flags.height, "Image height")
      ->capture_default_str();
  synth_cmd->add_option("--objects", synth_flags.objects, "Object count")
      ->capture_default_str();
  synth_cmd->add_option("--mix", mix, "Object mix: mixed|boxes|spheres")
      ->capture_default_str();
  synth_cmd
      ->add_option("--alpha-min", synth_flags.spec.alpha_min,
                   "Per-view scale ambiguity lower bound")
      ->capture_default_str();
  synth_cmd
      ->add_option("--alpha-max", synth_flags.spec.alpha_max,
                   "Per-view scale ambiguity upper bound")
      ->capture_default_str();
  synth_cmd
      ->add_option("--sigma-d", synth_flags.spec.sigma_d,
                   "Relative depth noise")
      ->capture_default_str();
  synth_cmd
      ->add_option("--sigma-px", synth_flags.spec.sigma_px,
                   "Pixel noise on match endpoints")
      ->capture_default_str();
  synth_cmd
      ->add_option("--rho-out", synth_flags.spec.rho_out,
                   "Injected outlier match fraction")
      ->capture_default_str();
  synth_cmd
      ->add_option("--stride", synth_flags.spec.match_stride,
                   "Source pixel lattice stride for matches")
      ->capture_default_str();

  // pipeline
  auto* pipe_cmd =
      app.add_subcommand("pipeline", "Run every stage on a scene directory");
  std::string pipe_in, pipe_out;
  bool skip_scale = false, skip_refine = false;
  pipe_cmd->add_option("--in", pipe_in, "Scene directory")->required();
  pipe_cmd->add_option("--out", pipe_out, "Output directory")->required();
  pipe_cmd->add_flag("--skip-scale", skip_scale,
                     "Ablation: keep relative scale (s = 1)");
  pipe_cmd->add_flag("--skip-refine", skip_refine,
                     "Ablation: zero refinement iterations");
  PipelineConfig pipe_over; // bound to flags, merged after resolve
  add_override_flags(pipe_cmd, pipe_over);

  // stage subcommands share --in/--out
  auto* agg_cmd = app.add_subcommand(
      "aggregate", "Pairwise predictions -> per-view depth/confidence");
  auto* scale_cmd = app.add_subcommand(
      "recover-scale", "Triangulation-grounded metric scale per view");
  auto* refine_cmd =
      app.add_subcommand("refine", "Two-stage robust depth refinement");
  auto* fuse_cmd = app.add_subcommand(
      "fuse", "Masked unprojection + radius outlier filter -> cloud.ply");
  auto* grasp_cmd =
      app.add_subcommand("grasp", "Grasp proposals from cloud.ply");
  std::string st_in, st_out;
  for (CLI::App* c : {agg_cmd, scale_cmd, refine_cmd, fuse_cmd, grasp_cmd}) {
    c->add_option("--in", st_in, "Scene directory")->required();
    c->add_option("--out", st_out, "Output directory")->required();
  }
  PipelineConfig stage_over;
  for (CLI::App* c : {agg_cmd, scale_cmd, refine_cmd, fuse_cmd, grasp_cmd})
    add_override_flags(c, stage_over);

  // sweep-views
  auto* sweep_cmd = app.add_subcommand(
      "sweep-views", "Pipeline metrics vs. ring view count on one scene");
  std::string sweep_csv;
  int sweep_min = 2, sweep_max = 9;
  sweep_cmd->add_option("--out", sweep_csv, "CSV path")->required();
  sweep_cmd->add_option("--views-min", sweep_min, "Smallest view count")
      ->capture_default_str();
  sweep_cmd->add_option("--views-max", sweep_max, "Largest view count")
      ->capture_default_str();
  sweep_cmd->add_option("--width", synth_flags.width, "Image width")
      ->capture_default_str();
  sweep_cmd->add_option("--height", synth_flags.height, "Image height")
      ->capture_default_str();
  sweep_cmd->add_option("--objects", synth_flags.objects, "Object count")
      ->capture_default_str();
  PipelineConfig sweep_over;
  add_override_flags(sweep_cmd, sweep_over);

  // eval
  auto* eval_cmd = app.add_subcommand(
      "eval", "Score a result directory against scene ground truth");
  std::string eval_scene, eval_result;
  eval_cmd->add_option("--scene", eval_scene, "Scene directory")->required();
  eval_cmd->add_option("--result", eval_result, "Pipeline output directory")
      ->required();

  // Global flags (--seed/--threads/--config/--profile) may appear after the
  // subcommand name.
  for (CLI::App* sub : app.get_subcommands({})) sub->fallthrough();

  CLI11_PARSE(app, argc, argv);

  auto merge_overrides = [&](CLI::App* cmd, const PipelineConfig& over,
                             PipelineConfig& cfg) {
    if (cmd->count("--tau-q")) cfg.tau_Q = over.tau_Q;
    if (cmd->count("--tau-c")) cfg.tau_C = over.tau_C;
    if (cmd->count("--r")) cfg.r = over.r;
    if (cmd->count("--n-min")) cfg.n_min = over.n_min;
    if (cmd->count("--n-c")) cfg.N_c = over.N_c;
    if (cmd->count("--n-3d")) cfg.N_3D = over.N_3D;
    if (cmd->count("--n-2d")) cfg.N_2D = over.N_2D;
    if (cmd->count("--n-support-min"))
      cfg.n_support_min = over.n_support_min;
    if (cmd->count("--voxel")) cfg.voxel = over.voxel;
  };

  uint64_t seed = 0;
  int threads = 0;

  if (synth_cmd->parsed()) {
    SynthConfig sc;
    resolve_config(app, g, &sc, &seed, &threads);
    // Explicit synth flags beat the config file.
    auto keep_if = [&](const char* flag, auto member) {
      if (synth_cmd->count(flag) == 0) synth_flags.*member = sc.*member;
    };
    keep_if("--views", &SynthConfig::views);
    keep_if("--width", &SynthConfig::width);
    keep_if("--height", &SynthConfig::height);
    keep_if("--objects", &SynthConfig::objects);
    if (synth_cmd->count("--alpha-min") == 0)
      synth_flags.spec.alpha_min = sc.spec.alpha_min;
    if (synth_cmd->count("--alpha-max") == 0)
      synth_flags.spec.alpha_max = sc.spec.alpha_max;
    if (synth_cmd->count("--sigma-d") == 0)
      synth_flags.spec.sigma_d = sc.spec.sigma_d;
    if (synth_cmd->count("--sigma-px") == 0)
      synth_flags.spec.sigma_px = sc.spec.sigma_px;
    if (synth_cmd->count("--rho-out") == 0)
      synth_flags.spec.rho_out = sc.spec.rho_out;
    if (synth_cmd->count("--stride") == 0)
      synth_flags.spec.match_stride = sc.spec.match_stride;

    ObjectMix object_mix = ObjectMix::kMixed;
    if (mix == "boxes") object_mix = ObjectMix::kBoxesOnly;
    else if (mix == "spheres") object_mix = ObjectMix::kSpheresOnly;
    else if (mix != "mixed") throw ConfigError("unknown --mix: " + mix);

    Scene scene = make_scene(seed, synth_flags.objects, object_mix);
    auto cams =
        ring_views(synth_flags.views, seed, synth_flags.width,
                   synth_flags.height);
    auto views = render_views(scene, cams);
    auto obs = make_observations(scene, views, synth_flags.spec, seed);
    write_scene_dir(synth_out, scene, views, obs);
    std::printf("wrote %s: %d views, %zu objects, %zu pair predictions\n",
                synth_out.c_str(), synth_flags.views, scene.objects.size(),
                obs.predictions.size());
    return 0;
  }

  if (pipe_cmd->parsed()) {
    PipelineConfig cfg = resolve_config(app, g, nullptr, &seed, &threads);
    merge_overrides(pipe_cmd, pipe_over, cfg);
    PipelineOptions opt;
    opt.skip_scale = skip_scale;
    opt.skip_refine = skip_refine;
    PipelineResult r = run_pipeline(pipe_in, pipe_out, cfg, opt);
    std::printf("pipeline done in %.3f s: %zu views, %zu cloud points, "
                "%zu grasps\n",
                r.total_seconds, r.zhat.size(), r.cloud.size(),
                r.grasps.size());
    for (const auto& t : r.timings)
      std::printf("  %-28s %9.3f s\n", t.name.c_str(), t.seconds);
    return 0;
  }

  auto load_common = [&](PipelineConfig& cfg, std::vector<CameraView>& cams,
                         std::vector<PairPrediction>& preds,
                         std::vector<std::vector<Correspondence>>& raw) {
    cams = read_cameras_json(join(st_in, "cameras.json"));
    preds = load_predictions(st_in, static_cast<int>(cams.size()), &raw);
    (void)cfg;
  };

  if (agg_cmd->parsed()) {
    PipelineConfig cfg = resolve_config(app, g, nullptr, &seed, &threads);
    merge_overrides(agg_cmd, stage_over, cfg);
    std::vector<CameraView> cams;
    std::vector<PairPrediction> preds;
    std::vector<std::vector<Correspondence>> raw;
    load_common(cfg, cams, preds, raw);
    ensure_dir(st_out);
    ensure_dir(join(st_out, "aggregated"));
    for (int v = 0; v < static_cast<int>(cams.size()); ++v) {
      auto [z, c] = aggregate_depth(preds, v);
      write_pfm(join(st_out, "aggregated/" + view_raster_name(v, "depth")),
                z);
      write_pfm(join(st_out, "aggregated/" + view_raster_name(v, "conf")),
                c);
    }
    std::printf("aggregated %zu views\n", cams.size());
    return 0;
  }

  if (scale_cmd->parsed()) {
    PipelineConfig cfg = resolve_config(app, g, nullptr, &seed, &threads);
    merge_overrides(scale_cmd, stage_over, cfg);
    std::vector<CameraView> cams;
    std::vector<PairPrediction> preds;
    std::vector<std::vector<Correspondence>> raw;
    load_common(cfg, cams, preds, raw);
    const int n_views = static_cast<int>(cams.size());
    std::vector<DepthMap> zhat;
    for (int v = 0; v < n_views; ++v)
      zhat.push_back(read_pfm(
          join(st_out, "aggregated/" + view_raster_name(v, "depth"))));
    auto sets = filter_all(raw, preds, cfg.tau_Q);
    TriangulationDrops drops;
    auto scales =
        recover_view_scales(sets, cams, zhat, cfg.n_support_min, &drops);
    write_scales_json(join(st_out, "scales.json"), scales);
    ensure_dir(join(st_out, "scaled"));
    for (int v = 0; v < n_views; ++v)
      write_pfm(join(st_out, "scaled/" + view_raster_name(v, "")),
                apply_scale(zhat[v], scales[v].s));
    std::printf("recovered %d view scales (%lld degenerate pairs dropped)\n",
                n_views, static_cast<long long>(drops.total()));
    return 0;
  }

  if (refine_cmd->parsed()) {
    PipelineConfig cfg = resolve_config(app, g, nullptr, &seed, &threads);
    merge_overrides(refine_cmd, stage_over, cfg);
    std::vector<CameraView> cams;
    std::vector<PairPrediction> preds;
    std::vector<std::vector<Correspondence>> raw;
    load_common(cfg, cams, preds, raw);
    const int n_views = static_cast<int>(cams.size());
    auto sets = filter_all(raw, preds, cfg.tau_Q);
    std::vector<RefineViewInput> rv;
    for (int v = 0; v < n_views; ++v)
      rv.push_back({cams[v].K, cams[v].pose,
                    read_pfm(join(st_out,
                                  "scaled/" + view_raster_name(v, "")))});
    RefinementProblem problem(std::move(rv), sets, cfg.delta_3D,
                              cfg.delta_2D);
    auto res = optimize(problem, cfg.refine_config());
    auto zstar = problem.bake();
    ensure_dir(join(st_out, "refined"));
    for (int v = 0; v < n_views; ++v)
      write_pfm(join(st_out, "refined/" + view_raster_name(v, "")),
                zstar[v]);
    write_losses_csv(join(st_out, "losses.csv"), res.trace);
    std::printf("refined %zu variables over %zu residuals\n",
                problem.num_variables(), problem.num_residuals());
    return 0;
  }

  if (fuse_cmd->parsed()) {
    PipelineConfig cfg = resolve_config(app, g, nullptr, &seed, &threads);
    merge_overrides(fuse_cmd, stage_over, cfg);
    std::vector<CameraView> cams;
    std::vector<PairPrediction> preds;
    std::vector<std::vector<Correspondence>> raw;
    load_common(cfg, cams, preds, raw);
    const int n_views = static_cast<int>(cams.size());
    auto sets = filter_all(raw, preds, cfg.tau_Q);
    std::vector<DepthMap> zstar;
    std::vector<ConfidenceMap> chat;
    std::vector<RgbImage> rgb;
    std::vector<MaskImage> seg, valid;
    char name[64];
    for (int v = 0; v < n_views; ++v) {
      zstar.push_back(
          read_pfm(join(st_out, "refined/" + view_raster_name(v, ""))));
      chat.push_back(read_pfm(
          join(st_out, "aggregated/" + view_raster_name(v, "conf"))));
      std::snprintf(name, sizeof(name), "rgb/view_%03d.ppm", v);
      rgb.push_back(read_ppm(join(st_in, name)));
      std::snprintf(name, sizeof(name), "masks/view_%03d.pgm", v);
      seg.push_back(read_pgm(join(st_in, name)));
    }
    std::vector<FusionViewInput> fv;
    for (int v = 0; v < n_views; ++v) {
      valid.push_back(valid_mask(v, sets, chat[v], seg[v], cfg.tau_C));
      fv.push_back(
          {cams[v].K, cams[v].pose, &zstar[v], &rgb[v], &valid[v]});
    }
    PointCloud cloud = radius_filter(fuse(fv), cfg.r, cfg.n_min);
    if (cfg.voxel > 0.0) cloud = voxel_downsample(cloud, cfg.voxel);
    write_ply(join(st_out, "cloud.ply"), cloud);
    std::printf("fused %zu points\n", cloud.size());
    return 0;
  }

  if (grasp_cmd->parsed()) {
    PipelineConfig cfg = resolve_config(app, g, nullptr, &seed, &threads);
    merge_overrides(grasp_cmd, stage_over, cfg);
    PointCloud cloud = read_ply(join(st_out, "cloud.ply"));
    auto grasps = generate_grasps(cloud, cfg.N_c, cfg.grasp_params());
    write_grasps_json(join(st_out, "grasps.json"), grasps);
    std::printf("proposed %zu grasps\n", grasps.size());
    return 0;
  }

  if (sweep_cmd->parsed()) {
    SynthConfig sc;
    PipelineConfig cfg = resolve_config(app, g, &sc, &seed, &threads);
    merge_overrides(sweep_cmd, sweep_over, cfg);
    if (sweep_cmd->count("--width")) sc.width = synth_flags.width;
    if (sweep_cmd->count("--height")) sc.height = synth_flags.height;
    if (sweep_cmd->count("--objects")) sc.objects = synth_flags.objects;
    auto rows = sweep_views(seed, sweep_min, sweep_max, cfg, sc);
    write_sweep_csv(sweep_csv, rows);
    for (const auto& row : rows)
      std::printf("views=%d mean_dist=%.6f coverage=%.3f runtime=%.2fs\n",
                  row.n_views, row.mean_dist, row.coverage, row.runtime_s);
    return 0;
  }

  if (eval_cmd->parsed()) {
    resolve_config(app, g, nullptr, &seed, &threads);
    EvalReport report = evaluate_dirs(eval_scene, eval_result);
    std::printf("mean_dist=%.6f p95_dist=%.6f coverage_5mm=%.4f",
                report.mean_dist, report.p95_dist, report.coverage_5mm);
    if (std::isfinite(report.rmse_matched))
      std::printf(" rmse=%.6f", report.rmse_matched);
    std::printf("\n");
    return 0;
  }

  return 0;
}

} // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
