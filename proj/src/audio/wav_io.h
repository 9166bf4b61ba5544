#pragma once

#include <string>
#include <vector>

namespace adatta {

struct Waveform {
  std::vector<double> samples;  // amplitudes in [-1, 1]
  int sample_rate = 0;

  double seconds() const {
    return sample_rate > 0
               ? static_cast<double>(samples.size()) / sample_rate
               : 0.0;
  }
};

// 16-bit PCM mono only; multi-channel input is rejected, never downmixed.
Waveform read_wav(const std::string& path);
void write_wav(const std::string& path, const Waveform& wave);

}  // namespace adatta
