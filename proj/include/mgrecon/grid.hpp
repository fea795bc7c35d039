// Copyright mgrecon authors. Apache 2.0 License.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "mgrecon/errors.hpp"

namespace mgrecon {

// Row-major H x W raster. Depth rasters use NaN for invalid pixels.
template <typename T>
class Grid2D {
public:
  Grid2D() = default;
  Grid2D(int width, int height, T fill = T{})
      : width_(width), height_(height),
        data_(static_cast<size_t>(width) * height, fill) {}

  int width() const { return width_; }
  int height() const { return height_; }
  size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& at(int x, int y) { return data_[static_cast<size_t>(y) * width_ + x]; }
  const T& at(int x, int y) const {
    return data_[static_cast<size_t>(y) * width_ + x];
  }
  T& operator[](size_t i) { return data_[i]; }
  const T& operator[](size_t i) const { return data_[i]; }

  bool in_bounds(int x, int y) const {
    return x >= 0 && x < width_ && y >= 0 && y < height_;
  }

  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

  bool same_shape(const Grid2D& other) const {
    return width_ == other.width_ && height_ == other.height_;
  }

private:
  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

using DepthMap = Grid2D<double>;
using ConfidenceMap = Grid2D<double>;
using MaskImage = Grid2D<uint8_t>;

struct RgbImage {
  Grid2D<uint8_t> r, g, b;
  int width() const { return r.width(); }
  int height() const { return r.height(); }
};

inline double invalid_depth() {
  return std::numeric_limits<double>::quiet_NaN();
}

inline bool depth_valid(double d) { return std::isfinite(d) && d > 0.0; }

// Weights of a bilinear footprint at continuous (u, v), pixel centers at
// integer coordinates. Neighbors are (x0,y0), (x0+1,y0), (x0,y0+1),
// (x0+1,y0+1) with x0 = floor(u); out-of-range neighbor indices carry zero
// weight for in-bounds (u, v).
struct BilinearFootprint {
  int x0, y0;
  double w[4];
};

inline std::optional<BilinearFootprint> bilinear_footprint(double u, double v,
                                                           int width,
                                                           int height) {
  if (!(u >= 0.0 && u <= width - 1 && v >= 0.0 && v <= height - 1))
    return std::nullopt;
  int x0 = static_cast<int>(std::floor(u));
  int y0 = static_cast<int>(std::floor(v));
  if (x0 >= width - 1) x0 = width - 2;   // u == width-1 edge case
  if (y0 >= height - 1) y0 = height - 2; // v == height-1 edge case
  if (x0 < 0) x0 = 0;                    // 1-wide rasters
  if (y0 < 0) y0 = 0;
  double fx = u - x0;
  double fy = v - y0;
  BilinearFootprint f;
  f.x0 = x0;
  f.y0 = y0;
  f.w[0] = (1.0 - fx) * (1.0 - fy);
  f.w[1] = fx * (1.0 - fy);
  f.w[2] = (1.0 - fx) * fy;
  f.w[3] = fx * fy;
  return f;
}

// Subpixel depth sampling interpolates inverse depth, which is affine in
// pixel coordinates on a planar surface patch, so bilinear interpolation
// is exact within one facet. A lookup is rejected (nullopt) when the
// footprint cannot be trusted to lie on one surface:
//   - some positive-weight neighbor is invalid (silhouette straddle;
//     renormalizing over the survivors biases the value),
//   - the neighbor max/min depth ratio exceeds kDepthEdgeRatio (gross
//     depth discontinuity: blending unrelated surfaces yields a value on
//     neither),
//   - an interpolation axis fails slope consistency: the within-footprint
//     inverse-depth slope must either be negligible or agree with an
//     adjacent outside slope of the same row/column. Disagreement flags an
//     occlusion jump or a facet crease inside the footprint.
// The consistency tolerance is calibrated per raster: noise is measured as
// the median absolute second difference of inverse depth (exactly zero on
// noiseless piecewise-planar rasters, ~the per-pixel noise scale
// otherwise), so clean rasters get strict boundary rejection while noisy
// rasters keep nearly all their footprints.
inline constexpr double kDepthEdgeRatio = 1.2;
inline constexpr double kSlopeFloorRel = 1e-5; // of max inverse depth
inline constexpr double kSlopeNoiseFactor = 5.0;

struct SampleFootprint {
  int nv = 0;      // positive-weight neighbors
  int px[4], py[4];
  double w[4];     // weights, sum exactly the bilinear total (= 1)
  double d[4];     // neighbor depths
  double Sw = 0.0;
};

class DepthSampler {
public:
  explicit DepthSampler(const DepthMap& depth) : depth_(&depth) {
    std::vector<double> mags;
    mags.reserve(depth.size());
    auto inv_at = [&](int x, int y) -> double {
      double d = depth.at(x, y);
      return depth_valid(d) ? 1.0 / d : invalid_depth();
    };
    for (int y = 0; y < depth.height(); ++y)
      for (int x = 0; x < depth.width(); ++x) {
        double c = inv_at(x, y);
        if (!std::isfinite(c)) continue;
        if (x >= 1 && x + 1 < depth.width()) {
          double l = inv_at(x - 1, y), r = inv_at(x + 1, y);
          if (std::isfinite(l) && std::isfinite(r))
            mags.push_back(std::abs(l - 2.0 * c + r));
        }
        if (y >= 1 && y + 1 < depth.height()) {
          double t = inv_at(x, y - 1), b = inv_at(x, y + 1);
          if (std::isfinite(t) && std::isfinite(b))
            mags.push_back(std::abs(t - 2.0 * c + b));
        }
      }
    if (!mags.empty()) {
      auto mid = mags.begin() + mags.size() / 2;
      std::nth_element(mags.begin(), mid, mags.end());
      noise_mad_ = *mid;
    }
  }

  // Footprint acceptance; see the policy above.
  std::optional<SampleFootprint> accept(double u, double v) const {
    const DepthMap& depth = *depth_;
    auto fp = bilinear_footprint(u, v, depth.width(), depth.height());
    if (!fp) return std::nullopt;
    const int dx[4] = {0, 1, 0, 1};
    const int dy[4] = {0, 0, 1, 1};
    SampleFootprint out;
    double dmin = std::numeric_limits<double>::infinity();
    double dmax = 0.0;
    double iv[4] = {0.0, 0.0, 0.0, 0.0};
    bool pos[4] = {false, false, false, false};
    for (int k = 0; k < 4; ++k) {
      if (fp->w[k] <= 0.0) continue;
      int x = fp->x0 + dx[k];
      int y = fp->y0 + dy[k];
      double d = depth.in_bounds(x, y) ? depth.at(x, y) : invalid_depth();
      if (!depth_valid(d)) return std::nullopt;
      pos[k] = true;
      iv[k] = 1.0 / d;
      dmin = std::min(dmin, d);
      dmax = std::max(dmax, d);
      out.px[out.nv] = x;
      out.py[out.nv] = y;
      out.w[out.nv] = fp->w[k];
      out.d[out.nv] = d;
      out.Sw += fp->w[k];
      ++out.nv;
    }
    if (out.nv == 0 || out.Sw <= 0.0) return std::nullopt;
    if (dmax > dmin * kDepthEdgeRatio) return std::nullopt;

    const double tol = std::max(kSlopeFloorRel / dmin,
                                kSlopeNoiseFactor * noise_mad_);
    auto inv_or_nan = [&](int x, int y) -> double {
      if (!depth.in_bounds(x, y)) return invalid_depth();
      double d = depth.at(x, y);
      return depth_valid(d) ? 1.0 / d : invalid_depth();
    };
    // Within-footprint slope i1 - i0 along one axis must be negligible or
    // match the slope just before (ib -> i0) or just after (i1 -> ia).
    auto consistent = [&](double i0, double i1, double ib, double ia) {
      double slope = i1 - i0;
      if (std::abs(slope) <= tol) return true;
      if (std::isfinite(ib) && std::abs(slope - (i0 - ib)) <= tol)
        return true;
      if (std::isfinite(ia) && std::abs(slope - (ia - i1)) <= tol)
        return true;
      return false;
    };
    // k indices: 0=(x0,y0) 1=(x0+1,y0) 2=(x0,y0+1) 3=(x0+1,y0+1).
    if (pos[0] && pos[2] && // column x0 spans both rows
        !consistent(iv[0], iv[2], inv_or_nan(fp->x0, fp->y0 - 1),
                    inv_or_nan(fp->x0, fp->y0 + 2)))
      return std::nullopt;
    if (pos[1] && pos[3] &&
        !consistent(iv[1], iv[3], inv_or_nan(fp->x0 + 1, fp->y0 - 1),
                    inv_or_nan(fp->x0 + 1, fp->y0 + 2)))
      return std::nullopt;
    if (pos[0] && pos[1] && // row y0 spans both columns
        !consistent(iv[0], iv[1], inv_or_nan(fp->x0 - 1, fp->y0),
                    inv_or_nan(fp->x0 + 2, fp->y0)))
      return std::nullopt;
    if (pos[2] && pos[3] &&
        !consistent(iv[2], iv[3], inv_or_nan(fp->x0 - 1, fp->y0 + 1),
                    inv_or_nan(fp->x0 + 2, fp->y0 + 1)))
      return std::nullopt;
    return out;
  }

  std::optional<double> sample(double u, double v) const {
    auto fp = accept(u, v);
    if (!fp) return std::nullopt;
    double inv = 0.0;
    for (int k = 0; k < fp->nv; ++k) inv += fp->w[k] / fp->d[k];
    if (inv <= 0.0) return std::nullopt;
    return fp->Sw / inv;
  }

  // Calibrated noise scale (inverse-depth units).
  double noise_mad() const { return noise_mad_; }

private:
  const DepthMap* depth_;
  double noise_mad_ = 0.0;
};

// Convenience for one-off lookups; builds the sampler (one raster pass)
// per call. Hot paths construct a DepthSampler once per raster.
inline std::optional<double> sample_depth(const DepthMap& depth, double u,
                                          double v) {
  return DepthSampler(depth).sample(u, v);
}

} // namespace mgrecon
