// Copyright mgrecon authors. Apache 2.0 License.
#pragma once

#include <string>
#include <vector>

#include "mgrecon/cloud.hpp"
#include "mgrecon/geometry.hpp"
#include "mgrecon/grid.hpp"

namespace mgrecon {

struct CameraView {
  Intrinsics K;
  Pose pose;
};

// One raw correspondence as stored in matches.jsonl.
struct RawMatch {
  int i = 0, j = 0;
  Vec2 xi = Vec2::Zero(), xj = Vec2::Zero();
  double q = 0.0;
};

// Depth rasters travel as grayscale PFM (little-endian float32, bottom row
// first, scale -1.0). NaN-invalid pixels are stored as 0 with a sidecar
// validity mask (<name>.valid.pgm, 255 = valid), since PFM has no portable
// NaN story.
void write_pfm(const std::string& path, const DepthMap& depth);
DepthMap read_pfm(const std::string& path);
std::string pfm_sidecar_path(const std::string& pfm_path);

// Binary PGM (P5). In-memory masks are {0,1}; on disk 0/255.
void write_pgm(const std::string& path, const MaskImage& mask);
MaskImage read_pgm(const std::string& path);

// Binary PPM (P6).
void write_ppm(const std::string& path, const RgbImage& img);
RgbImage read_ppm(const std::string& path);

// ASCII PLY with properties x y z red green blue. Coordinates are printed
// with %.9g so identical clouds serialize byte-identically.
void write_ply(const std::string& path, const PointCloud& cloud);
PointCloud read_ply(const std::string& path);

void write_cameras_json(const std::string& path,
                        const std::vector<CameraView>& views);
std::vector<CameraView> read_cameras_json(const std::string& path);

void write_matches_jsonl(const std::string& path,
                         const std::vector<RawMatch>& matches);
std::vector<RawMatch> read_matches_jsonl(const std::string& path);

// obs/ raster naming: pair_%03d_%03d_{depth|conf}_%03d.pfm.
std::string pair_raster_name(int i, int j, const std::string& kind, int view);

bool file_exists(const std::string& path);
void ensure_dir(const std::string& path);

} // namespace mgrecon
