// Copyright mgrecon authors. Apache 2.0 License.
#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "mgrecon/geometry.hpp"
#include "mgrecon/grid.hpp"
#include "mgrecon/io.hpp"

namespace mgrecon {

// Up-to-scale depth/confidence rasters a two-view predictor emits for one
// view pair. Invalid pixels are NaN in depth with confidence 0.
struct PairPrediction {
  int i = 0, j = 0;
  DepthMap depth_i, depth_j;
  ConfidenceMap conf_i, conf_j;

  const DepthMap& depth_for(int view) const {
    return view == i ? depth_i : depth_j;
  }
  const ConfidenceMap& conf_for(int view) const {
    return view == i ? conf_i : conf_j;
  }
  bool mentions(int view) const { return view == i || view == j; }
};

struct Correspondence {
  Vec2 xi = Vec2::Zero();
  Vec2 xj = Vec2::Zero();
  double q = 0.0;
};

// i < j canonical; xi pixels deduplicated (see filter_matches).
struct CorrespondenceSet {
  int i = 0, j = 0;
  std::vector<Correspondence> matches;

  double q_sum() const {
    double s = 0.0;
    for (const auto& m : matches) s += m.q;
    return s;
  }
};

// sqrt(qi * qj); symmetric, monotone in each argument.
double match_confidence(double qi, double qj);

// Keeps strictly q > tau_Q, preserving input order, then deduplicates
// matches sharing a rounded xi pixel keeping the highest q (first
// occurrence wins ties). Idempotent.
CorrespondenceSet filter_matches(int i, int j,
                                 const std::vector<Correspondence>& raw,
                                 double tau_Q);

// Per pixel over all pairs mentioning the view: depth = sum(C*Z)/sum(C),
// confidence = arithmetic mean of C. Pairs contribute at a pixel only where
// their depth is valid and C > 0; pixels with no contribution are
// NaN-invalid with confidence 0.
std::pair<DepthMap, ConfidenceMap> aggregate_depth(
    const std::vector<PairPrediction>& predictions, int view);

// One pair worth of provider output.
struct PairObservation {
  PairPrediction prediction;
  std::vector<Correspondence> raw_matches;
};

// Abstracts the neural front-end: something that can produce per-pair
// depth/confidence rasters and raw correspondences.
class PairProvider {
public:
  virtual ~PairProvider() = default;
  virtual PairObservation produce_pair(int i, int j) = 0;
};

// Reads precomputed artifacts from a scene directory:
//   obs/pair_III_JJJ_{depth,conf}_VVV.pfm and matches.jsonl.
class FileBackend : public PairProvider {
public:
  explicit FileBackend(std::string dir);
  PairObservation produce_pair(int i, int j) override;

private:
  std::string dir_;
  std::vector<RawMatch> all_matches_;
  bool matches_loaded_ = false;
};

} // namespace mgrecon
