#pragma once

#include <string>

#include "core/tensor.h"

namespace adatta {

inline constexpr int64_t kNumLandmarks = 68;
inline constexpr int64_t kLandmarkDims = kNumLandmarks * 3;

// T x 68 x 3 facial keypoints in a normalized head-centric frame, stored
// flat as [T, 204] with coordinate order (x0,y0,z0, x1,y1,z1, ...).
struct LandmarkSequence {
  Tensor points;  // [T, 204]

  int64_t frames() const { return points.rows(); }
  double coord(int64_t t, int64_t landmark, int64_t axis) const {
    return points.at(t, landmark * 3 + axis);
  }
  void set_coord(int64_t t, int64_t landmark, int64_t axis, double v) {
    points.at(t, landmark * 3 + axis) = v;
  }
  void validate() const;
};

// Per-identity similarity transform removing global translation and scale:
// normalized = (raw - translate) / scale.
struct LandmarkNormalization {
  double scale = 1.0;
  double translate[3] = {0.0, 0.0, 0.0};
};

LandmarkNormalization fit_normalization(const LandmarkSequence& raw);
LandmarkSequence apply_normalization(const LandmarkSequence& raw,
                                     const LandmarkNormalization& norm);

// Landmark file layout (little-endian):
//   magic   4 bytes "ADLM"
//   version u32 (1)
//   frames  u32
//   fps     f64       frame rate of the landmark track
//   scale   f64, translate f64 x 3   normalization transform
//   data    f64 x frames x 68 x 3
struct LandmarkFile {
  LandmarkSequence landmarks;
  double fps = 0.0;
  LandmarkNormalization norm;
};

LandmarkFile read_landmarks(const std::string& path);
void write_landmarks(const std::string& path, const LandmarkFile& file);

}  // namespace adatta
