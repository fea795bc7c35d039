// Copyright mgrecon authors. Apache 2.0 License.
#pragma once

#include <cstdint>
#include <vector>

#include "mgrecon/geometry.hpp"

namespace mgrecon {

// World-frame point with color and provenance (source view and pixel).
struct CloudPoint {
  Vec3 p;
  uint8_t r = 0, g = 0, b = 0;
  int32_t view = -1;
  int32_t px = -1, py = -1;
};

using PointCloud = std::vector<CloudPoint>;

} // namespace mgrecon
