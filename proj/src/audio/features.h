#pragma once

#include <cstdint>
#include <vector>

#include "audio/wav_io.h"
#include "core/tensor.h"

namespace adatta {

// Signal-processing front end configuration. Keys map 1:1 onto the
// "features" section of the pipeline config file.
struct FeatureConfig {
  int sample_rate = 16000;
  int n_fft = 1024;
  int hop_length = 200;
  int n_mels = 80;
  double fmin = 0.0;
  double fmax = 8000.0;
  double log_floor = 1e-5;  // linear-magnitude floor before the log
  double pitch_fmin = 60.0;
  double pitch_fmax = 400.0;
  double pitch_voicing_threshold = 0.5;
  int align_tolerance = 2;
  int griffin_lim_iters = 60;
  uint64_t griffin_lim_seed = 0;

  void validate() const;
};

struct MelSpectrogram {
  Tensor values;  // [T, n_mels], natural-log mel magnitudes
  int hop_length = 0;
  int sample_rate = 0;

  int64_t frames() const { return values.rows(); }
  int64_t n_mels() const { return values.cols(); }
};

struct ProsodyBands {
  Tensor values;  // [T, 20]
  int hop_length = 0;
  int sample_rate = 0;

  int64_t frames() const { return values.rows(); }
};

inline constexpr int64_t kProsodyBins = 20;

struct PitchContour {
  std::vector<double> f0;       // Hz, 0 where unvoiced
  std::vector<bool> voiced;

  int64_t frames() const { return static_cast<int64_t>(f0.size()); }
};

struct FrameToPhonemeMap {
  std::vector<int64_t> assignment;  // per-frame phoneme index, non-decreasing
  std::vector<int64_t> durations;   // per-phoneme frame counts, post-adjust

  int64_t num_frames() const { return static_cast<int64_t>(assignment.size()); }
  int64_t num_phonemes() const { return static_cast<int64_t>(durations.size()); }
};

// Framing convention (shared by the mel, pitch, and Griffin-Lim paths):
// the signal is zero-padded by (n_fft - hop)/2 samples on each side and
// sliced into n_fft-sample frames every hop samples, so
//   T = (len - hop) / hop + 1  (integer division; minimum 1 frame)
// which makes T * hop == len whenever hop divides len. Synthesized audio for
// a T-frame mel is therefore exactly T * hop samples long.
int64_t frame_count(int64_t num_samples, const FeatureConfig& cfg);

MelSpectrogram compute_mel(const Waveform& wave, const FeatureConfig& cfg);

// Center frequencies (Hz) of the n_mels triangular filters; used by tests as
// the independent reference for filterbank geometry.
std::vector<double> mel_center_frequencies(const FeatureConfig& cfg);

ProsodyBands slice_prosody_bands(const MelSpectrogram& mel);

PitchContour extract_pitch(const Waveform& wave, const FeatureConfig& cfg);

Waveform griffin_lim(const MelSpectrogram& mel, const FeatureConfig& cfg,
                     int iters, uint64_t seed);

FrameToPhonemeMap align_frames_to_phonemes(int64_t num_frames,
                                           std::vector<int64_t> durations,
                                           int64_t tolerance);

}  // namespace adatta
