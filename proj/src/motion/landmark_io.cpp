#include "motion/landmark_io.h"

#include <cmath>
#include <cstring>
#include <fstream>

#include "core/errors.h"

namespace adatta {

void LandmarkSequence::validate() const {
  if (points.ndim() != 2 || points.cols() != kLandmarkDims)
    throw InvalidInput("landmarks: expected [T, 204] matrix");
  if (points.rows() < 1) throw InvalidInput("landmarks: empty sequence");
  for (int64_t i = 0; i < points.numel(); ++i) {
    const double v = points.at(i);
    if (!std::isfinite(v))
      throw InvalidInput("landmarks: non-finite coordinate");
    if (v < -1.5 || v > 1.5)
      throw InvalidInput("landmarks: coordinate outside [-1.5, 1.5]");
  }
}

LandmarkNormalization fit_normalization(const LandmarkSequence& raw) {
  LandmarkNormalization norm;
  const int64_t t = raw.frames();
  const int64_t n = t * kNumLandmarks;
  double c[3] = {0.0, 0.0, 0.0};
  for (int64_t f = 0; f < t; ++f)
    for (int64_t l = 0; l < kNumLandmarks; ++l)
      for (int64_t a = 0; a < 3; ++a) c[a] += raw.coord(f, l, a);
  for (int64_t a = 0; a < 3; ++a) c[a] /= static_cast<double>(n);
  double rms = 0.0;
  for (int64_t f = 0; f < t; ++f)
    for (int64_t l = 0; l < kNumLandmarks; ++l) {
      double d2 = 0.0;
      for (int64_t a = 0; a < 3; ++a) {
        const double d = raw.coord(f, l, a) - c[a];
        d2 += d * d;
      }
      rms += d2;
    }
  rms = std::sqrt(rms / static_cast<double>(n));
  norm.scale = rms > 1e-9 ? 2.0 * rms : 1.0;  // RMS radius maps to 0.5
  for (int64_t a = 0; a < 3; ++a) norm.translate[a] = c[a];
  return norm;
}

LandmarkSequence apply_normalization(const LandmarkSequence& raw,
                                     const LandmarkNormalization& norm) {
  LandmarkSequence out;
  out.points = Tensor({raw.frames(), kLandmarkDims});
  for (int64_t f = 0; f < raw.frames(); ++f)
    for (int64_t l = 0; l < kNumLandmarks; ++l)
      for (int64_t a = 0; a < 3; ++a)
        out.set_coord(f, l, a,
                      (raw.coord(f, l, a) - norm.translate[a]) / norm.scale);
  return out;
}

LandmarkFile read_landmarks(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open landmark file: " + path);
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, "ADLM", 4) != 0)
    throw InvalidInput("not an ADLM landmark file: " + path);
  uint32_t version = 0, frames = 0;
  f.read(reinterpret_cast<char*>(&version), 4);
  f.read(reinterpret_cast<char*>(&frames), 4);
  if (version != 1)
    throw InvalidInput("unsupported landmark file version: " + path);
  LandmarkFile file;
  f.read(reinterpret_cast<char*>(&file.fps), 8);
  f.read(reinterpret_cast<char*>(&file.norm.scale), 8);
  f.read(reinterpret_cast<char*>(file.norm.translate), 24);
  file.landmarks.points = Tensor({static_cast<int64_t>(frames), kLandmarkDims});
  f.read(reinterpret_cast<char*>(file.landmarks.points.data()),
         static_cast<std::streamsize>(file.landmarks.points.numel() * 8));
  if (!f) throw IoError("landmark file truncated: " + path);
  return file;
}

void write_landmarks(const std::string& path, const LandmarkFile& file) {
  if (file.landmarks.points.cols() != kLandmarkDims)
    throw InvalidInput("write_landmarks: expected [T, 204] matrix");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write landmark file: " + path);
  f.write("ADLM", 4);
  const uint32_t version = 1;
  const uint32_t frames = static_cast<uint32_t>(file.landmarks.frames());
  f.write(reinterpret_cast<const char*>(&version), 4);
  f.write(reinterpret_cast<const char*>(&frames), 4);
  f.write(reinterpret_cast<const char*>(&file.fps), 8);
  f.write(reinterpret_cast<const char*>(&file.norm.scale), 8);
  f.write(reinterpret_cast<const char*>(file.norm.translate), 24);
  f.write(reinterpret_cast<const char*>(file.landmarks.points.data()),
          static_cast<std::streamsize>(file.landmarks.points.numel() * 8));
  if (!f) throw IoError("short write for landmark file: " + path);
}

}  // namespace adatta
