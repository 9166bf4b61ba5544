#include "pipeline/toydata.h"

#include <cmath>
#include <filesystem>

#include "audio/features.h"
#include "core/errors.h"
#include "core/rng.h"

namespace adatta {

namespace fs = std::filesystem;

namespace {

constexpr double kPi = 3.14159265358979323846;

// phoneme-determined pitch, shared across speakers
double phoneme_f0(int64_t phoneme) {
  return 130.0 + 12.0 * static_cast<double>((phoneme * 7) % 12);
}

// speaker resonance profile, kept well above the 20 prosody bands so the
// low bins stay speaker-invariant up to window leakage. Resonance centers
// interleave across speakers, so any two speakers stay spectrally distinct.
double speaker_gain(int speaker, double freq, uint64_t seed) {
  if (freq < 1500.0) return 0.0;
  Rng rng(mix_seed(seed, 0xf00d, static_cast<uint64_t>(speaker)));
  double g = 0.02;
  for (int j = 0; j < 3; ++j) {
    const double center =
        1800.0 + 450.0 * (speaker % 4) + 1700.0 * j + rng.uniform(-120.0, 120.0);
    const double width = rng.uniform(260.0, 380.0);
    const double d = (freq - center) / width;
    g += 0.30 * std::exp(-0.5 * d * d);
  }
  return g;
}

void set_point(LandmarkSequence& lms, int64_t t, int64_t l, double x, double y,
               double z) {
  lms.set_coord(t, l, 0, x);
  lms.set_coord(t, l, 1, y);
  lms.set_coord(t, l, 2, z);
}

}  // namespace

LandmarkSequence face_template() {
  LandmarkSequence lms;
  lms.points = Tensor({1, kLandmarkDims});
  auto depth = [](double x, double y) {
    return 0.12 * std::exp(-(x * x + (y + 0.1) * (y + 0.1)) / 0.18);
  };
  auto put = [&](int64_t l, double x, double y) {
    set_point(lms, 0, l, x, y, depth(x, y));
  };
  // jaw 0-16
  for (int i = 0; i <= 16; ++i) {
    const double phi = kPi * i / 16.0;
    put(i, -0.55 * std::cos(phi), 0.10 - 0.75 * std::sin(phi));
  }
  // brows 17-21, 22-26
  for (int j = 0; j <= 4; ++j) {
    const double arch = 0.05 * std::sin(kPi * j / 4.0);
    put(17 + j, -0.42 + 0.075 * j, 0.35 + arch);
    put(22 + j, 0.12 + 0.075 * j, 0.35 + arch);
  }
  // nose bridge 27-30, lower nose 31-35
  for (int j = 0; j <= 3; ++j) put(27 + j, 0.0, 0.28 - 0.0867 * j);
  for (int j = 0; j <= 4; ++j)
    put(31 + j, -0.12 + 0.06 * j, -0.06 + 0.015 * std::sin(kPi * j / 4.0));
  // eyes 36-41, 42-47 (hexagons, starting from the outer corner)
  for (int j = 0; j < 6; ++j) {
    const double ang = kPi - j * kPi / 3.0;
    put(36 + j, -0.27 + 0.09 * std::cos(ang), 0.22 + 0.045 * std::sin(ang));
    put(42 + j, 0.27 + 0.09 * std::cos(ang), 0.22 + 0.045 * std::sin(ang));
  }
  // outer lips 48-59 (12 points), inner lips 60-67 (8 points)
  for (int j = 0; j < 12; ++j) {
    const double ang = kPi - j * kPi / 6.0;
    put(48 + j, 0.22 * std::cos(ang), -0.32 + 0.10 * std::sin(ang));
  }
  for (int j = 0; j < 8; ++j) {
    const double ang = kPi - j * kPi / 4.0;
    put(60 + j, 0.13 * std::cos(ang), -0.32 + 0.045 * std::sin(ang));
  }
  return lms;
}

Waveform synth_toy_utterance(const std::vector<int64_t>& phonemes,
                             const std::vector<int64_t>& durations,
                             int speaker, const FeatureConfig& feat,
                             uint64_t seed) {
  if (phonemes.size() != durations.size() || phonemes.empty())
    throw InvalidInput("toy utterance: bad phoneme/duration lists");
  Waveform wave;
  wave.sample_rate = feat.sample_rate;
  const double sr = feat.sample_rate;
  const int fade = feat.sample_rate * 3 / 1000;  // 3 ms edge fade
  for (size_t p = 0; p < phonemes.size(); ++p) {
    const double f0 = phoneme_f0(phonemes[p]);
    const int64_t n = durations[p] * feat.hop_length;
    std::vector<double> seg(static_cast<size_t>(n), 0.0);
    const int max_h = static_cast<int>(std::floor((feat.fmax - 200.0) / f0));
    for (int h = 1; h <= max_h; ++h) {
      const double freq = h * f0;
      double amp = 0.0;
      if (freq < 600.0) amp = 0.5 / h;  // shared low-band content
      amp += speaker_gain(speaker, freq, seed);
      if (amp <= 0.0) continue;
      const double phase0 = 0.7 * h;  // fixed per-harmonic phase
      for (int64_t i = 0; i < n; ++i)
        seg[static_cast<size_t>(i)] +=
            amp * std::sin(2.0 * kPi * freq * i / sr + phase0);
    }
    for (int i = 0; i < fade && i < n; ++i) {
      const double g = 0.5 - 0.5 * std::cos(kPi * i / fade);
      seg[static_cast<size_t>(i)] *= g;
      seg[static_cast<size_t>(n - 1 - i)] *= g;
    }
    wave.samples.insert(wave.samples.end(), seg.begin(), seg.end());
  }
  // fixed gain, identical across speakers; per-utterance peak normalization
  // would rescale the shared low band by a speaker-dependent factor
  for (auto& v : wave.samples) v *= 0.12;
  double peak = 0.0;
  for (double v : wave.samples) peak = std::max(peak, std::abs(v));
  if (peak > 0.98) {
    for (auto& v : wave.samples) v *= 0.98 / peak;
  }
  return wave;
}

LandmarkSequence synth_toy_landmarks(const Waveform& wave,
                                     const FeatureConfig& feat) {
  const int64_t t_len = frame_count(static_cast<int64_t>(wave.samples.size()), feat);
  const LandmarkSequence base = face_template();
  LandmarkSequence lms;
  lms.points = Tensor({t_len, kLandmarkDims});

  // smoothed per-frame energy, normalized to [0, 1]
  std::vector<double> energy(static_cast<size_t>(t_len), 0.0);
  for (int64_t t = 0; t < t_len; ++t) {
    double acc = 0.0;
    int64_t n = 0;
    for (int64_t i = t * feat.hop_length;
         i < (t + 1) * feat.hop_length &&
         i < static_cast<int64_t>(wave.samples.size());
         ++i, ++n)
      acc += wave.samples[static_cast<size_t>(i)] *
             wave.samples[static_cast<size_t>(i)];
    energy[static_cast<size_t>(t)] = n > 0 ? std::sqrt(acc / n) : 0.0;
  }
  double peak = 1e-9;
  for (double e : energy) peak = std::max(peak, e);
  std::vector<double> open(static_cast<size_t>(t_len), 0.0);
  for (int64_t t = 0; t < t_len; ++t) {
    double acc = 0.0;
    int n = 0;
    for (int64_t s = std::max<int64_t>(0, t - 1);
         s <= std::min<int64_t>(t_len - 1, t + 1); ++s, ++n)
      acc += energy[static_cast<size_t>(s)] / peak;
    open[static_cast<size_t>(t)] = 0.28 * acc / n;
  }

  for (int64_t t = 0; t < t_len; ++t) {
    const double sway_x = 0.02 * std::sin(2.0 * kPi * t / 90.0);
    const double sway_y = 0.012 * std::sin(2.0 * kPi * t / 130.0 + 1.0);
    const double m = open[static_cast<size_t>(t)];
    for (int64_t l = 0; l < kNumLandmarks; ++l) {
      double x = base.coord(0, l, 0);
      double y = base.coord(0, l, 1);
      const double z = base.coord(0, l, 2);
      // bottom lip follows the mouth opening
      if (l >= 55 && l <= 59) {
        const double ang = kPi - (l - 48) * kPi / 6.0;
        y -= m * (0.3 + 0.7 * std::abs(std::sin(ang)));
      }
      if (l >= 65 && l <= 67) {
        const double ang = kPi - (l - 60) * kPi / 4.0;
        y -= m * (0.3 + 0.7 * std::abs(std::sin(ang)));
      }
      // chin follows with reduced weight
      if (l >= 6 && l <= 10)
        y -= 0.6 * m * (3.0 - std::abs(static_cast<double>(l) - 8.0)) / 3.0;
      // occasional blink
      if ((t % 73) < 2 && (l == 37 || l == 38 || l == 43 || l == 44))
        y -= 0.035;
      set_point(lms, t, l, x + sway_x, y + sway_y, z);
    }
  }
  return lms;
}

std::string make_toy_corpus(const std::string& dir, const PipelineConfig& cfg,
                            const ToyCorpusSpec& spec) {
  if (spec.num_speakers < 1 || spec.utterances_per_speaker < 1)
    throw InvalidInput("toy corpus: need at least one speaker and utterance");
  fs::create_directories(dir);
  CorpusManifest manifest;
  Rng rng(mix_seed(spec.seed, 0x70c0ULL));
  for (int s = 0; s < spec.num_speakers; ++s) {
    for (int u = 0; u < spec.utterances_per_speaker; ++u) {
      UtteranceRecord rec;
      rec.utterance_id = "spk" + std::to_string(s) + "_utt" + std::to_string(u);
      rec.speaker_id = "spk" + std::to_string(s);
      const int64_t vocab_used = std::min<int64_t>(cfg.tts.phoneme_vocab - 1, 15);
      for (int p = 0; p < spec.phonemes_per_utterance; ++p) {
        rec.phoneme_ids.push_back(1 + rng.uniform_int(vocab_used));
        rec.durations.push_back(spec.base_frames_per_phoneme +
                                rng.uniform_int(4));
      }
      const Waveform wave = synth_toy_utterance(
          rec.phoneme_ids, rec.durations, s, cfg.features, spec.seed);
      const std::string stem = (fs::path(dir) / rec.utterance_id).string();
      rec.audio_path = stem + ".wav";
      write_wav(rec.audio_path, wave);
      if (spec.with_landmarks) {
        LandmarkFile lf;
        lf.landmarks = synth_toy_landmarks(wave, cfg.features);
        lf.fps = static_cast<double>(cfg.features.sample_rate) /
                 cfg.features.hop_length;
        rec.landmark_path = stem + ".lmk";
        write_landmarks(*rec.landmark_path, lf);
      }
      manifest.records.push_back(std::move(rec));
    }
  }
  const std::string manifest_path = (fs::path(dir) / "manifest.jsonl").string();
  save_corpus(manifest_path, manifest);
  return manifest_path;
}

}  // namespace adatta
