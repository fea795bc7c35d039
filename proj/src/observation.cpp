// Copyright mgrecon authors. Apache 2.0 License.
#include "mgrecon/observation.hpp"

#include <cmath>
#include <unordered_map>

namespace mgrecon {

double match_confidence(double qi, double qj) {
  if (qi < 0.0 || qj < 0.0)
    throw NegativeConfidence("match_confidence: negative input confidence");
  return std::sqrt(qi * qj);
}

CorrespondenceSet filter_matches(int i, int j,
                                 const std::vector<Correspondence>& raw,
                                 double tau_Q) {
  CorrespondenceSet set;
  set.i = i;
  set.j = j;
  // Map rounded xi pixel -> slot in set.matches. First occurrence fixes the
  // output position; later duplicates replace the slot only on higher q.
  std::unordered_map<int64_t, size_t> slot_of;
  for (const auto& m : raw) {
    if (!(m.q > tau_Q)) continue;
    int64_t px = std::llround(m.xi.x());
    int64_t py = std::llround(m.xi.y());
    int64_t key = (px << 32) ^ py;
    auto it = slot_of.find(key);
    if (it == slot_of.end()) {
      slot_of.emplace(key, set.matches.size());
      set.matches.push_back(m);
    } else if (m.q > set.matches[it->second].q) {
      set.matches[it->second] = m;
    }
  }
  return set;
}

std::pair<DepthMap, ConfidenceMap> aggregate_depth(
    const std::vector<PairPrediction>& predictions, int view) {
  std::vector<const PairPrediction*> mine;
  for (const auto& p : predictions)
    if (p.mentions(view)) mine.push_back(&p);
  if (mine.empty())
    throw NoPredictionsForView("aggregate_depth: view " +
                               std::to_string(view) +
                               " appears in no prediction pair");
  const DepthMap& first = mine.front()->depth_for(view);
  for (const auto* p : mine) {
    if (!p->depth_for(view).same_shape(first) ||
        !p->conf_for(view).same_shape(first))
      throw DimensionMismatch("aggregate_depth: raster shape mismatch");
  }
  DepthMap zhat(first.width(), first.height(), invalid_depth());
  ConfidenceMap chat(first.width(), first.height(), 0.0);
  for (size_t k = 0; k < zhat.size(); ++k) {
    double wsum = 0.0, zsum = 0.0, csum = 0.0;
    int n = 0;
    for (const auto* p : mine) {
      double z = p->depth_for(view)[k];
      double c = p->conf_for(view)[k];
      if (!depth_valid(z) || !(c > 0.0)) continue;
      wsum += c;
      zsum += c * z;
      csum += c;
      ++n;
    }
    if (n > 0 && wsum > 0.0) {
      zhat[k] = zsum / wsum;
      chat[k] = csum / n;
    }
  }
  return {std::move(zhat), std::move(chat)};
}

FileBackend::FileBackend(std::string dir) : dir_(std::move(dir)) {}

PairObservation FileBackend::produce_pair(int i, int j) {
  PairObservation obs;
  obs.prediction.i = i;
  obs.prediction.j = j;
  auto load = [&](const std::string& kind, int view) {
    std::string path = dir_ + "/obs/" + pair_raster_name(i, j, kind, view);
    try {
      return read_pfm(path);
    } catch (const MissingArtifact&) {
      throw MissingArtifact("pair (" + std::to_string(i) + "," +
                            std::to_string(j) + "): missing " + path);
    }
  };
  obs.prediction.depth_i = load("depth", i);
  obs.prediction.depth_j = load("depth", j);
  obs.prediction.conf_i = load("conf", i);
  obs.prediction.conf_j = load("conf", j);
  if (!matches_loaded_) {
    std::string path = dir_ + "/matches.jsonl";
    if (!file_exists(path))
      throw MissingArtifact("pair (" + std::to_string(i) + "," +
                            std::to_string(j) + "): missing " + path);
    all_matches_ = read_matches_jsonl(path);
    matches_loaded_ = true;
  }
  for (const auto& m : all_matches_)
    if (m.i == i && m.j == j)
      obs.raw_matches.push_back(Correspondence{m.xi, m.xj, m.q});
  return obs;
}

} // namespace mgrecon
