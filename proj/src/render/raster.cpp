#include "render/raster.h"

#include <cmath>
#include <fstream>
#include <string>

#include "core/errors.h"
#include "core/serialize.h"

namespace adatta {

namespace {

constexpr uint8_t kBackground[3] = {18, 18, 24};
constexpr uint8_t kEdgeColor[3] = {90, 200, 120};
constexpr uint8_t kPointColor[3] = {250, 250, 250};

void put_pixel(ImageFrame& img, int x, int y, const uint8_t color[3]) {
  if (x < 0 || y < 0 || x >= img.width || y >= img.height) return;
  uint8_t* p = img.at(x, y);
  p[0] = color[0];
  p[1] = color[1];
  p[2] = color[2];
}

void draw_line(ImageFrame& img, int x0, int y0, int x1, int y1,
               const uint8_t color[3]) {
  const int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
  const int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
  int err = dx + dy;
  while (true) {
    put_pixel(img, x0, y0, color);
    if (x0 == x1 && y0 == y1) break;
    const int e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x0 += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y0 += sy;
    }
  }
}

void draw_disc(ImageFrame& img, int cx, int cy, int radius,
               const uint8_t color[3]) {
  for (int dy = -radius; dy <= radius; ++dy)
    for (int dx = -radius; dx <= radius; ++dx)
      if (dx * dx + dy * dy <= radius * radius)
        put_pixel(img, cx + dx, cy + dy, color);
}

std::vector<std::pair<int, int>> build_edges() {
  std::vector<std::pair<int, int>> e;
  auto chain = [&e](int from, int to, bool closed) {
    for (int i = from; i < to; ++i) e.emplace_back(i, i + 1);
    if (closed) e.emplace_back(to, from);
  };
  chain(0, 16, false);   // jaw
  chain(17, 21, false);  // right brow
  chain(22, 26, false);  // left brow
  chain(27, 30, false);  // nose bridge
  chain(31, 35, false);  // lower nose
  chain(36, 41, true);   // right eye
  chain(42, 47, true);   // left eye
  chain(48, 59, true);   // outer lips
  chain(60, 67, true);   // inner lips
  return e;
}

int to_px(double v, int extent) {
  // round half away from zero, pinned so results match across platforms
  return static_cast<int>(std::llround((v + 1.0) * 0.5 * (extent - 1)));
}

}  // namespace

const std::vector<std::pair<int, int>>& landmark_edges() {
  static const std::vector<std::pair<int, int>> edges = build_edges();
  return edges;
}

ImageFrame rasterize_landmarks(const double* landmark_frame,
                               const RenderConfig& cfg,
                               int64_t* clamped_count) {
  ImageFrame img;
  img.width = cfg.width;
  img.height = cfg.height;
  img.pixels.resize(static_cast<size_t>(cfg.width) * cfg.height * 3);
  for (size_t i = 0; i < img.pixels.size(); i += 3) {
    img.pixels[i] = kBackground[0];
    img.pixels[i + 1] = kBackground[1];
    img.pixels[i + 2] = kBackground[2];
  }
  int px[kNumLandmarks], py[kNumLandmarks];
  for (int64_t l = 0; l < kNumLandmarks; ++l) {
    double x = landmark_frame[l * 3];
    double y = landmark_frame[l * 3 + 1];
    if (x < -1.5 || x > 1.5 || y < -1.5 || y > 1.5) {
      if (clamped_count) ++(*clamped_count);
      x = std::min(1.5, std::max(-1.5, x));
      y = std::min(1.5, std::max(-1.5, y));
    }
    px[l] = to_px(x, cfg.width);
    py[l] = to_px(-y, cfg.height);  // y up in landmark space, down in pixels
  }
  for (const auto& [a, b] : landmark_edges())
    draw_line(img, px[a], py[a], px[b], py[b], kEdgeColor);
  for (int64_t l = 0; l < kNumLandmarks; ++l)
    draw_disc(img, px[l], py[l], cfg.point_radius, kPointColor);
  return img;
}

ImageFrame rasterize_landmarks(const LandmarkSequence& lms, int64_t t,
                               const RenderConfig& cfg,
                               int64_t* clamped_count) {
  if (t < 0 || t >= lms.frames())
    throw InvalidInput("rasterize: frame index out of range");
  return rasterize_landmarks(lms.points.data() + t * kLandmarkDims, cfg,
                             clamped_count);
}

uint64_t image_hash(const ImageFrame& frame) {
  uint64_t h = 1469598103934665603ULL;
  for (uint8_t b : frame.pixels) {
    h ^= b;
    h *= 1099511628211ULL;
  }
  return h;
}

void write_ppm(const std::string& path, const ImageFrame& frame) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write image: " + path);
  f << "P6\n" << frame.width << " " << frame.height << "\n255\n";
  f.write(reinterpret_cast<const char*>(frame.pixels.data()),
          static_cast<std::streamsize>(frame.pixels.size()));
  if (!f) throw IoError("short write for image: " + path);
}

}  // namespace adatta
