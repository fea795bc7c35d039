// Copyright mgrecon authors. Apache 2.0 License.
#pragma once

#include <string>
#include <vector>

#include "mgrecon/fusion.hpp"
#include "mgrecon/grasp.hpp"
#include "mgrecon/observation.hpp"
#include "mgrecon/refine.hpp"
#include "mgrecon/scale.hpp"
#include "mgrecon/synthetic.hpp"

namespace mgrecon {

// Flat JSON config. Profiles fix the bundle defaults; file keys override the
// profile; explicit CLI flags override the file. Unknown keys are an error.
struct PipelineConfig {
  double tau_Q = 3.0;
  double tau_C = 3.0;
  double delta_3D = 0.3;
  double delta_2D = 3.0;
  int N_3D = 100;
  int N_2D = 100;
  double r = 0.03;
  int n_min = 60;
  int N_c = 500;
  std::string profile = "benchmark";

  // Plumbing knobs (config-file parity for every CLI flag).
  double ball_radius = 0.05;
  double delta_t = 0.02;
  double delta_R_deg = 30.0;
  double w_max = 0.085;
  double voxel = 0.0; // 0 disables the optional downsample pass
  int n_pts_min = 30;
  int keep = 50;
  int ball_cap = 2048;
  int n_support_min = kNSupportMin;

  static PipelineConfig for_profile(const std::string& name);

  GraspParams grasp_params() const;
  RefinementConfig refine_config() const;
};

// Harness knobs with the same config-file parity.
struct SynthConfig {
  int views = 5;
  int width = 256;
  int height = 256;
  int objects = 4;
  PerturbationSpec spec = PerturbationSpec::standard_noisy();
};

// Applies a flat JSON config file over the current values. One namespace
// for every CLI flag: pipeline knobs, harness knobs, seed, threads. A
// "profile" key rebases cfg on that bundle before the file's remaining
// keys apply (suppressed via honor_profile_key=false when an explicit
// --profile flag already chose the bundle); unknown keys are a ConfigError.
void apply_config_file(const std::string& path, PipelineConfig& cfg,
                       SynthConfig& synth, uint64_t& seed, int& threads,
                       bool honor_profile_key = true);

struct PipelineOptions {
  bool skip_scale = false;  // ablation arm: no metric grounding (s = 1)
  bool skip_refine = false; // ablation arm: zero refinement iterations
};

struct PipelineInputs {
  std::vector<CameraView> cams;
  std::vector<RgbImage> rgb;
  std::vector<MaskImage> seg;
  std::vector<PairPrediction> predictions;
  std::vector<std::vector<Correspondence>> raw; // parallel to predictions
};

struct StageTiming {
  std::string name;
  double seconds = 0.0;
};

struct PipelineResult {
  std::vector<CorrespondenceSet> sets;
  std::vector<DepthMap> zhat;
  std::vector<ConfidenceMap> chat;
  std::vector<ScaleEstimate> scales;
  std::vector<DepthMap> ztilde;
  std::vector<DepthMap> zstar;
  std::vector<TraceRow> trace;
  std::vector<MaskImage> valid;
  PointCloud cloud_raw; // fused, before the radius filter
  PointCloud cloud;
  std::vector<GraspPose> grasps;
  std::vector<StageTiming> timings;
  double total_seconds = 0.0;
  TriangulationDrops tri_drops;
};

// In-memory pipeline: aggregation -> scale -> refinement -> fusion ->
// grasps. Stage failures are rethrown as PipelineError naming the stage.
PipelineResult run_pipeline_mem(const PipelineInputs& in,
                                const PipelineConfig& cfg,
                                const PipelineOptions& opt);

// Disk pipeline: reads a scene directory (cameras.json, rgb/, masks/, obs/,
// matches.jsonl), persists every intermediate under out_dir (aggregated/,
// scales.json, scaled/, refined/, losses.csv, cloud.ply, grasps.json,
// timings.json).
PipelineResult run_pipeline(const std::string& in_dir,
                            const std::string& out_dir,
                            const PipelineConfig& cfg,
                            const PipelineOptions& opt);

// Scene directory creation for `synth`: renders views and perturbed
// observations and writes the full layout, including gt/ rasters and
// scene.json ground truth.
void write_scene_dir(const std::string& dir, const Scene& scene,
                     const std::vector<RenderedView>& views,
                     const SceneObservations& obs);

struct SweepRow {
  int n_views = 0;
  double mean_dist = 0.0;
  double coverage = 0.0;
  double runtime_s = 0.0;
};

// One pipeline run per view count on the same scene; fixed seeds, so two
// invocations produce identical rows.
std::vector<SweepRow> sweep_views(uint64_t seed, int views_min, int views_max,
                                  const PipelineConfig& cfg,
                                  const SynthConfig& synth);
void write_sweep_csv(const std::string& path,
                     const std::vector<SweepRow>& rows);

// Loaders shared by the per-stage CLI subcommands.
std::vector<PairPrediction> load_predictions(const std::string& dir,
                                             int n_views,
                                             std::vector<std::vector<Correspondence>>* raw);
std::vector<CorrespondenceSet> filter_all(
    const std::vector<std::vector<Correspondence>>& raw,
    const std::vector<PairPrediction>& predictions, double tau_Q);

void write_scales_json(const std::string& path,
                       const std::vector<ScaleEstimate>& scales);
std::vector<ScaleEstimate> read_scales_json(const std::string& path);
void write_losses_csv(const std::string& path,
                      const std::vector<TraceRow>& trace);
void write_timings_json(const std::string& path,
                        const std::vector<StageTiming>& timings,
                        double total_seconds);

// Per-view raster naming inside aggregated/, scaled/, refined/.
std::string view_raster_name(int view, const std::string& kind);

// cloud.ply (and refined/, when present alongside gt/) from result_dir is
// scored against scene.json ground truth from scene_dir.
EvalReport evaluate_dirs(const std::string& scene_dir,
                         const std::string& result_dir);

} // namespace mgrecon
