#include "render/avi.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "core/errors.h"

namespace adatta {

namespace {

class ByteBuf {
 public:
  void u16(uint16_t v) {
    bytes_.push_back(static_cast<uint8_t>(v));
    bytes_.push_back(static_cast<uint8_t>(v >> 8));
  }
  void u32(uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<uint8_t>(v >> (8 * i)));
  }
  void fourcc(const char* s) {
    bytes_.insert(bytes_.end(), s, s + 4);
  }
  void raw(const void* data, size_t n) {
    const uint8_t* p = static_cast<const uint8_t*>(data);
    bytes_.insert(bytes_.end(), p, p + n);
  }
  void patch_u32(size_t pos, uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_[pos + static_cast<size_t>(i)] = static_cast<uint8_t>(v >> (8 * i));
  }
  size_t size() const { return bytes_.size(); }
  const std::vector<uint8_t>& data() const { return bytes_; }

 private:
  std::vector<uint8_t> bytes_;
};

struct IndexEntry {
  char ckid[4];
  uint32_t offset;  // from the 'movi' fourcc, first chunk at offset 4
  uint32_t size;
};

}  // namespace

std::vector<int64_t> video_frame_indices(int64_t num_motion_frames,
                                         double motion_rate_hz,
                                         double audio_seconds, int fps) {
  if (num_motion_frames < 1) throw InvalidInput("video frames: empty motion");
  const int64_t n = std::llround(audio_seconds * fps);
  std::vector<int64_t> idx(static_cast<size_t>(std::max<int64_t>(n, 1)));
  for (size_t i = 0; i < idx.size(); ++i) {
    const double t_mid = (static_cast<double>(i) + 0.5) / fps;
    int64_t m = std::llround(t_mid * motion_rate_hz - 0.5);
    idx[i] = std::min(num_motion_frames - 1, std::max<int64_t>(0, m));
  }
  return idx;
}

void write_avi(const std::string& path, const std::vector<ImageFrame>& frames,
               const Waveform& audio, int fps) {
  if (frames.empty()) throw InvalidInput("write_avi: no frames");
  if (audio.samples.empty()) throw InvalidInput("write_avi: empty audio");
  const int w = frames[0].width, h = frames[0].height;
  for (const auto& fr : frames)
    if (fr.width != w || fr.height != h)
      throw InvalidInput("write_avi: frame sizes differ");

  const uint32_t n_frames = static_cast<uint32_t>(frames.size());
  const uint32_t sr = static_cast<uint32_t>(audio.sample_rate);
  const uint32_t n_samples = static_cast<uint32_t>(audio.samples.size());
  const uint32_t row_stride = static_cast<uint32_t>((w * 3 + 3) / 4 * 4);
  const uint32_t frame_bytes = row_stride * static_cast<uint32_t>(h);

  // 16-bit PCM payload
  std::vector<uint8_t> pcm(static_cast<size_t>(n_samples) * 2);
  for (size_t i = 0; i < audio.samples.size(); ++i) {
    const double v = std::min(1.0, std::max(-1.0, audio.samples[i]));
    const int16_t s = static_cast<int16_t>(std::lround(v * 32767.0));
    pcm[2 * i] = static_cast<uint8_t>(s & 0xff);
    pcm[2 * i + 1] = static_cast<uint8_t>((s >> 8) & 0xff);
  }

  ByteBuf buf;
  buf.fourcc("RIFF");
  const size_t riff_size_pos = buf.size();
  buf.u32(0);
  buf.fourcc("AVI ");

  // hdrl list
  buf.fourcc("LIST");
  const size_t hdrl_size_pos = buf.size();
  buf.u32(0);
  const size_t hdrl_start = buf.size();
  buf.fourcc("hdrl");

  buf.fourcc("avih");
  buf.u32(56);
  buf.u32(static_cast<uint32_t>(1000000.0 / fps));  // usec per frame
  buf.u32(frame_bytes * static_cast<uint32_t>(fps) + sr * 2);
  buf.u32(0);
  buf.u32(0x10);  // AVIF_HASINDEX
  buf.u32(n_frames);
  buf.u32(0);
  buf.u32(2);  // streams
  buf.u32(frame_bytes);
  buf.u32(static_cast<uint32_t>(w));
  buf.u32(static_cast<uint32_t>(h));
  for (int i = 0; i < 4; ++i) buf.u32(0);

  // video stream header
  buf.fourcc("LIST");
  const size_t strl_v_pos = buf.size();
  buf.u32(0);
  const size_t strl_v_start = buf.size();
  buf.fourcc("strl");
  buf.fourcc("strh");
  buf.u32(56);
  buf.fourcc("vids");
  buf.fourcc("DIB ");
  buf.u32(0);
  buf.u16(0);
  buf.u16(0);
  buf.u32(0);
  buf.u32(1);                        // scale
  buf.u32(static_cast<uint32_t>(fps));  // rate
  buf.u32(0);
  buf.u32(n_frames);                 // length in frames
  buf.u32(frame_bytes);
  buf.u32(0xFFFFFFFF);               // quality
  buf.u32(0);
  buf.u16(0);
  buf.u16(0);
  buf.u16(static_cast<uint16_t>(w));
  buf.u16(static_cast<uint16_t>(h));
  buf.fourcc("strf");
  buf.u32(40);
  buf.u32(40);  // biSize
  buf.u32(static_cast<uint32_t>(w));
  buf.u32(static_cast<uint32_t>(h));
  buf.u16(1);
  buf.u16(24);
  buf.u32(0);  // BI_RGB
  buf.u32(frame_bytes);
  buf.u32(0);
  buf.u32(0);
  buf.u32(0);
  buf.u32(0);
  buf.patch_u32(strl_v_pos, static_cast<uint32_t>(buf.size() - strl_v_start));

  // audio stream header
  buf.fourcc("LIST");
  const size_t strl_a_pos = buf.size();
  buf.u32(0);
  const size_t strl_a_start = buf.size();
  buf.fourcc("strl");
  buf.fourcc("strh");
  buf.u32(56);
  buf.fourcc("auds");
  buf.u32(0);
  buf.u32(0);
  buf.u16(0);
  buf.u16(0);
  buf.u32(0);
  buf.u32(1);           // scale
  buf.u32(sr);          // rate: samples per second
  buf.u32(0);
  buf.u32(n_samples);   // length in samples
  buf.u32(sr * 2);
  buf.u32(0xFFFFFFFF);
  buf.u32(2);           // sample size (block align)
  buf.u16(0);
  buf.u16(0);
  buf.u16(0);
  buf.u16(0);
  buf.fourcc("strf");
  buf.u32(16);
  buf.u16(1);   // PCM
  buf.u16(1);   // mono
  buf.u32(sr);
  buf.u32(sr * 2);
  buf.u16(2);
  buf.u16(16);
  buf.patch_u32(strl_a_pos, static_cast<uint32_t>(buf.size() - strl_a_start));

  buf.patch_u32(hdrl_size_pos, static_cast<uint32_t>(buf.size() - hdrl_start));

  // movi list with per-frame interleaving
  buf.fourcc("LIST");
  const size_t movi_size_pos = buf.size();
  buf.u32(0);
  const size_t movi_start = buf.size();  // position of the 'movi' fourcc
  buf.fourcc("movi");

  std::vector<IndexEntry> index;
  std::vector<uint8_t> bgr_row(row_stride, 0);
  size_t audio_cursor = 0;
  for (uint32_t f = 0; f < n_frames; ++f) {
    IndexEntry ve;
    std::memcpy(ve.ckid, "00db", 4);
    ve.offset = static_cast<uint32_t>(buf.size() - movi_start);
    ve.size = frame_bytes;
    index.push_back(ve);
    buf.fourcc("00db");
    buf.u32(frame_bytes);
    const ImageFrame& img = frames[f];
    // bottom-up BGR rows
    for (int y = h - 1; y >= 0; --y) {
      std::fill(bgr_row.begin(), bgr_row.end(), 0);
      for (int x = 0; x < w; ++x) {
        const uint8_t* p = img.at(x, y);
        bgr_row[static_cast<size_t>(3 * x)] = p[2];
        bgr_row[static_cast<size_t>(3 * x + 1)] = p[1];
        bgr_row[static_cast<size_t>(3 * x + 2)] = p[0];
      }
      buf.raw(bgr_row.data(), bgr_row.size());
    }
    // audio slice covering [f/fps, (f+1)/fps); the final frame takes the rest
    size_t audio_end =
        f + 1 == n_frames
            ? pcm.size()
            : std::min(pcm.size(), static_cast<size_t>(
                                       static_cast<uint64_t>(2.0 * sr *
                                                             (f + 1.0) / fps) &
                                       ~1ULL));
    if (audio_end > audio_cursor) {
      IndexEntry ae;
      std::memcpy(ae.ckid, "01wb", 4);
      ae.offset = static_cast<uint32_t>(buf.size() - movi_start);
      ae.size = static_cast<uint32_t>(audio_end - audio_cursor);
      index.push_back(ae);
      buf.fourcc("01wb");
      buf.u32(ae.size);
      buf.raw(pcm.data() + audio_cursor, audio_end - audio_cursor);
      if ((audio_end - audio_cursor) % 2 == 1) buf.raw("\0", 1);
      audio_cursor = audio_end;
    }
  }
  buf.patch_u32(movi_size_pos, static_cast<uint32_t>(buf.size() - movi_start));

  buf.fourcc("idx1");
  buf.u32(static_cast<uint32_t>(index.size() * 16));
  for (const auto& e : index) {
    buf.raw(e.ckid, 4);
    buf.u32(0x10);  // AVIIF_KEYFRAME
    buf.u32(e.offset);
    buf.u32(e.size);
  }

  buf.patch_u32(riff_size_pos, static_cast<uint32_t>(buf.size() - 8));

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write video file: " + path);
  out.write(reinterpret_cast<const char*>(buf.data().data()),
            static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("short write for video file: " + path);
}

void compose_video(const std::vector<ImageFrame>& frames,
                   const Waveform& audio, const RenderConfig& cfg,
                   const std::string& out_path) {
  if (frames.empty()) throw InvalidInput("compose_video: need at least 1 frame");
  if (audio.samples.empty())
    throw InvalidInput("compose_video: empty audio track");
  const double video_seconds =
      static_cast<double>(frames.size()) / static_cast<double>(cfg.fps);
  const double audio_seconds = audio.seconds();
  const double slack = 1.0 / cfg.fps + 0.025;
  if (std::abs(video_seconds - audio_seconds) > slack) {
    throw DurationMismatch(
        "compose_video: video " + std::to_string(video_seconds) +
        "s vs audio " + std::to_string(audio_seconds) +
        "s exceeds tolerance " + std::to_string(slack) + "s");
  }
  write_avi(out_path, frames, audio, cfg.fps);
}

}  // namespace adatta
