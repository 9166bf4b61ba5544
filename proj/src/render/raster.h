#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "motion/landmark_io.h"
#include "pipeline/config.h"

namespace adatta {

struct ImageFrame {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> pixels;  // RGB, row-major, top-down

  uint8_t* at(int x, int y) { return pixels.data() + 3 * (y * width + x); }
  const uint8_t* at(int x, int y) const {
    return pixels.data() + 3 * (y * width + x);
  }
};

// standard 68-landmark connectivity: jaw, brows, nose, eyes, lips
const std::vector<std::pair<int, int>>& landmark_edges();

// Deterministic schematic rasterization of one landmark frame. Normalized
// coordinates map affinely onto the canvas: x=-1 -> column 0, x=+1 -> the
// last column, y=+1 -> row 0 (y points up), with round-half-away-from-zero
// integer rounding. Coordinates outside [-1.5, 1.5] are clamped and counted
// in *clamped_count when the pointer is non-null.
ImageFrame rasterize_landmarks(const double* landmark_frame /* 68*3 */,
                               const RenderConfig& cfg,
                               int64_t* clamped_count = nullptr);

ImageFrame rasterize_landmarks(const LandmarkSequence& lms, int64_t t,
                               const RenderConfig& cfg,
                               int64_t* clamped_count = nullptr);

uint64_t image_hash(const ImageFrame& frame);

void write_ppm(const std::string& path, const ImageFrame& frame);

}  // namespace adatta
