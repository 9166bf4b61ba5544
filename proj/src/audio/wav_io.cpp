#include "audio/wav_io.h"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "core/errors.h"

namespace adatta {

namespace {

uint32_t rd_u32(const uint8_t* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) |
         (static_cast<uint32_t>(p[3]) << 24);
}

uint16_t rd_u16(const uint8_t* p) {
  return static_cast<uint16_t>(p[0] | (p[1] << 8));
}

void wr_u32(std::ofstream& f, uint32_t v) {
  uint8_t b[4] = {static_cast<uint8_t>(v), static_cast<uint8_t>(v >> 8),
                  static_cast<uint8_t>(v >> 16), static_cast<uint8_t>(v >> 24)};
  f.write(reinterpret_cast<const char*>(b), 4);
}

void wr_u16(std::ofstream& f, uint16_t v) {
  uint8_t b[2] = {static_cast<uint8_t>(v), static_cast<uint8_t>(v >> 8)};
  f.write(reinterpret_cast<const char*>(b), 2);
}

}  // namespace

Waveform read_wav(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open wav file: " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                             std::istreambuf_iterator<char>());
  if (bytes.size() < 44 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw InvalidInput("not a RIFF/WAVE file: " + path);
  }
  size_t pos = 12;
  int channels = 0, bits = 0, rate = 0;
  const uint8_t* data_ptr = nullptr;
  size_t data_len = 0;
  while (pos + 8 <= bytes.size()) {
    const char* id = reinterpret_cast<const char*>(bytes.data() + pos);
    const uint32_t sz = rd_u32(bytes.data() + pos + 4);
    if (pos + 8 + sz > bytes.size()) break;
    if (std::memcmp(id, "fmt ", 4) == 0 && sz >= 16) {
      const uint8_t* p = bytes.data() + pos + 8;
      const uint16_t fmt = rd_u16(p);
      channels = rd_u16(p + 2);
      rate = static_cast<int>(rd_u32(p + 4));
      bits = rd_u16(p + 14);
      if (fmt != 1) throw InvalidInput("wav must be PCM: " + path);
    } else if (std::memcmp(id, "data", 4) == 0) {
      data_ptr = bytes.data() + pos + 8;
      data_len = sz;
    }
    pos += 8 + sz + (sz & 1);
  }
  if (!data_ptr || channels == 0) {
    throw InvalidInput("wav missing fmt/data chunk: " + path);
  }
  if (channels != 1) {
    throw InvalidInput("wav must be mono, got " + std::to_string(channels) +
                       " channels: " + path);
  }
  if (bits != 16) {
    throw InvalidInput("wav must be 16-bit PCM, got " + std::to_string(bits) +
                       " bits: " + path);
  }
  Waveform wave;
  wave.sample_rate = rate;
  const size_t n = data_len / 2;
  wave.samples.resize(n);
  for (size_t i = 0; i < n; ++i) {
    int16_t s;
    std::memcpy(&s, data_ptr + 2 * i, 2);
    wave.samples[i] = static_cast<double>(s) / 32768.0;
  }
  return wave;
}

void write_wav(const std::string& path, const Waveform& wave) {
  if (wave.sample_rate <= 0) throw InvalidInput("write_wav: bad sample rate");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write wav file: " + path);
  const uint32_t data_size = static_cast<uint32_t>(wave.samples.size() * 2);
  f.write("RIFF", 4);
  wr_u32(f, 36 + data_size);
  f.write("WAVE", 4);
  f.write("fmt ", 4);
  wr_u32(f, 16);
  wr_u16(f, 1);  // PCM
  wr_u16(f, 1);  // mono
  wr_u32(f, static_cast<uint32_t>(wave.sample_rate));
  wr_u32(f, static_cast<uint32_t>(wave.sample_rate * 2));
  wr_u16(f, 2);   // block align
  wr_u16(f, 16);  // bits
  f.write("data", 4);
  wr_u32(f, data_size);
  for (double v : wave.samples) {
    const double clamped = std::min(1.0, std::max(-1.0, v));
    const int16_t s = static_cast<int16_t>(std::lround(clamped * 32767.0));
    char b[2] = {static_cast<char>(s & 0xff), static_cast<char>((s >> 8) & 0xff)};
    f.write(b, 2);
  }
  if (!f) throw IoError("short write: " + path);
}

}  // namespace adatta
