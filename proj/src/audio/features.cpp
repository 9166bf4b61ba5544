#include "audio/features.h"

#include <algorithm>
#include <cmath>
#include <complex>
#include <string>

#include "core/errors.h"
#include "core/fft.h"
#include "core/rng.h"

namespace adatta {

namespace {

constexpr double kPi = 3.14159265358979323846;

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) {
  return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

std::vector<double> hann_window(int n) {
  std::vector<double> w(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i)
    w[static_cast<size_t>(i)] = 0.5 - 0.5 * std::cos(2.0 * kPi * i / n);
  return w;
}

// [n_mels][n_fft/2+1] triangular filters, peak 1, HTK mel scale
std::vector<std::vector<double>> mel_filterbank(const FeatureConfig& cfg) {
  const int bins = cfg.n_fft / 2 + 1;
  const double mel_lo = hz_to_mel(cfg.fmin);
  const double mel_hi = hz_to_mel(cfg.fmax);
  std::vector<double> pts(static_cast<size_t>(cfg.n_mels + 2));
  for (int i = 0; i < cfg.n_mels + 2; ++i) {
    pts[static_cast<size_t>(i)] =
        mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / (cfg.n_mels + 1));
  }
  std::vector<std::vector<double>> fb(
      static_cast<size_t>(cfg.n_mels),
      std::vector<double>(static_cast<size_t>(bins), 0.0));
  const double hz_per_bin =
      static_cast<double>(cfg.sample_rate) / cfg.n_fft;
  for (int m = 0; m < cfg.n_mels; ++m) {
    const double lo = pts[static_cast<size_t>(m)];
    const double mid = pts[static_cast<size_t>(m + 1)];
    const double hi = pts[static_cast<size_t>(m + 2)];
    for (int k = 0; k < bins; ++k) {
      const double f = k * hz_per_bin;
      double w = 0.0;
      if (f > lo && f < hi) {
        w = f <= mid ? (f - lo) / (mid - lo) : (hi - f) / (hi - mid);
      }
      fb[static_cast<size_t>(m)][static_cast<size_t>(k)] = w;
    }
  }
  return fb;
}

struct Framing {
  std::vector<double> padded;
  int64_t frames = 0;
  int64_t pad_left = 0;
};

Framing frame_signal(const std::vector<double>& samples,
                     const FeatureConfig& cfg) {
  const int64_t n = static_cast<int64_t>(samples.size());
  const int64_t hop = cfg.hop_length;
  const int64_t pad_total = cfg.n_fft - hop;
  Framing fr;
  fr.pad_left = pad_total / 2;
  fr.frames = frame_count(n, cfg);
  const int64_t need = (fr.frames - 1) * hop + cfg.n_fft;
  fr.padded.assign(static_cast<size_t>(std::max(need, fr.pad_left + n)), 0.0);
  std::copy(samples.begin(), samples.end(),
            fr.padded.begin() + fr.pad_left);
  return fr;
}

// magnitude STFT, [T][n_fft/2+1]
std::vector<std::vector<std::complex<double>>> stft(
    const std::vector<double>& samples, const FeatureConfig& cfg) {
  const Framing fr = frame_signal(samples, cfg);
  const std::vector<double> win = hann_window(cfg.n_fft);
  const int bins = cfg.n_fft / 2 + 1;
  std::vector<std::vector<std::complex<double>>> out(
      static_cast<size_t>(fr.frames));
  std::vector<std::complex<double>> buf(static_cast<size_t>(cfg.n_fft));
  for (int64_t t = 0; t < fr.frames; ++t) {
    const int64_t base = t * cfg.hop_length;
    for (int i = 0; i < cfg.n_fft; ++i) {
      buf[static_cast<size_t>(i)] = fr.padded[static_cast<size_t>(base + i)] *
                                    win[static_cast<size_t>(i)];
    }
    fft_inplace(buf, /*inverse=*/false);
    out[static_cast<size_t>(t)].assign(buf.begin(), buf.begin() + bins);
  }
  return out;
}

// inverse STFT via windowed overlap-add; returns exactly T*hop samples
std::vector<double> istft(
    const std::vector<std::vector<std::complex<double>>>& spec,
    const FeatureConfig& cfg) {
  const int64_t frames = static_cast<int64_t>(spec.size());
  const int64_t hop = cfg.hop_length;
  const int64_t pad_left = (cfg.n_fft - hop) / 2;
  const int64_t total = (frames - 1) * hop + cfg.n_fft;
  const std::vector<double> win = hann_window(cfg.n_fft);
  std::vector<double> acc(static_cast<size_t>(total), 0.0);
  std::vector<double> wsum(static_cast<size_t>(total), 0.0);
  std::vector<std::complex<double>> buf(static_cast<size_t>(cfg.n_fft));
  for (int64_t t = 0; t < frames; ++t) {
    const auto& half = spec[static_cast<size_t>(t)];
    for (int k = 0; k <= cfg.n_fft / 2; ++k)
      buf[static_cast<size_t>(k)] = half[static_cast<size_t>(k)];
    for (int k = cfg.n_fft / 2 + 1; k < cfg.n_fft; ++k)
      buf[static_cast<size_t>(k)] =
          std::conj(half[static_cast<size_t>(cfg.n_fft - k)]);
    fft_inplace(buf, /*inverse=*/true);
    const int64_t base = t * hop;
    for (int i = 0; i < cfg.n_fft; ++i) {
      const double w = win[static_cast<size_t>(i)];
      acc[static_cast<size_t>(base + i)] +=
          w * buf[static_cast<size_t>(i)].real();
      wsum[static_cast<size_t>(base + i)] += w * w;
    }
  }
  std::vector<double> out(static_cast<size_t>(frames * hop), 0.0);
  for (int64_t i = 0; i < frames * hop; ++i) {
    const int64_t j = i + pad_left;
    if (j < total && wsum[static_cast<size_t>(j)] > 1e-9) {
      out[static_cast<size_t>(i)] =
          acc[static_cast<size_t>(j)] / wsum[static_cast<size_t>(j)];
    }
  }
  return out;
}

// mel -> linear magnitude via multiplicative non-negative least squares:
// transpose-normalized init, then x <- x * (M^T (y / Mx)) / (M^T 1)
std::vector<std::vector<double>> mel_to_linear(const MelSpectrogram& mel,
                                               const FeatureConfig& cfg) {
  const auto fb = mel_filterbank(cfg);
  const int n = cfg.n_mels;
  const int bins = cfg.n_fft / 2 + 1;
  const int nnls_iters = 40;
  std::vector<double> colsum(static_cast<size_t>(bins), 1e-9);
  for (int m = 0; m < n; ++m)
    for (int k = 0; k < bins; ++k)
      colsum[static_cast<size_t>(k)] += fb[static_cast<size_t>(m)][static_cast<size_t>(k)];
  const int64_t frames = mel.frames();
  std::vector<std::vector<double>> lin(
      static_cast<size_t>(frames),
      std::vector<double>(static_cast<size_t>(bins), 0.0));
  std::vector<double> y(static_cast<size_t>(n)), mx(static_cast<size_t>(n));
  for (int64_t t = 0; t < frames; ++t) {
    auto& x = lin[static_cast<size_t>(t)];
    for (int m = 0; m < n; ++m)
      y[static_cast<size_t>(m)] = std::exp(mel.values.at(t, m));
    for (int k = 0; k < bins; ++k) {
      double acc = 0.0;
      for (int m = 0; m < n; ++m)
        acc += fb[static_cast<size_t>(m)][static_cast<size_t>(k)] * y[static_cast<size_t>(m)];
      x[static_cast<size_t>(k)] = acc / colsum[static_cast<size_t>(k)];
    }
    for (int it = 0; it < nnls_iters; ++it) {
      for (int m = 0; m < n; ++m) {
        double acc = 0.0;
        for (int k = 0; k < bins; ++k)
          acc += fb[static_cast<size_t>(m)][static_cast<size_t>(k)] * x[static_cast<size_t>(k)];
        mx[static_cast<size_t>(m)] = acc + 1e-12;
      }
      for (int k = 0; k < bins; ++k) {
        double num = 0.0, den = 0.0;
        for (int m = 0; m < n; ++m) {
          const double w = fb[static_cast<size_t>(m)][static_cast<size_t>(k)];
          num += w * y[static_cast<size_t>(m)] / mx[static_cast<size_t>(m)];
          den += w;
        }
        if (den > 1e-12) x[static_cast<size_t>(k)] *= num / den;
      }
    }
  }
  return lin;
}

}  // namespace

void FeatureConfig::validate() const {
  if (sample_rate <= 0) throw InvalidInput("features: sample_rate must be > 0");
  if (!is_power_of_two(static_cast<size_t>(n_fft)))
    throw InvalidInput("features: n_fft must be a power of two");
  if (hop_length <= 0 || hop_length > n_fft)
    throw InvalidInput("features: hop_length must be in (0, n_fft]");
  if (n_mels < kProsodyBins)
    throw InvalidInput("features: n_mels must be >= 20");
  if (fmax <= fmin || fmax > sample_rate / 2.0)
    throw InvalidInput("features: need fmin < fmax <= sample_rate/2");
  if (log_floor <= 0.0) throw InvalidInput("features: log_floor must be > 0");
  if (pitch_fmin <= 0.0 || pitch_fmax <= pitch_fmin)
    throw InvalidInput("features: need 0 < pitch_fmin < pitch_fmax");
  if (align_tolerance < 0)
    throw InvalidInput("features: align_tolerance must be >= 0");
}

int64_t frame_count(int64_t num_samples, const FeatureConfig& cfg) {
  if (num_samples < cfg.hop_length) return 1;
  return (num_samples - cfg.hop_length) / cfg.hop_length + 1;
}

std::vector<double> mel_center_frequencies(const FeatureConfig& cfg) {
  const double mel_lo = hz_to_mel(cfg.fmin);
  const double mel_hi = hz_to_mel(cfg.fmax);
  std::vector<double> centers(static_cast<size_t>(cfg.n_mels));
  for (int m = 0; m < cfg.n_mels; ++m) {
    centers[static_cast<size_t>(m)] =
        mel_to_hz(mel_lo + (mel_hi - mel_lo) * (m + 1) / (cfg.n_mels + 1));
  }
  return centers;
}

MelSpectrogram compute_mel(const Waveform& wave, const FeatureConfig& cfg) {
  cfg.validate();
  if (wave.samples.empty()) throw InvalidInput("compute_mel: empty waveform");
  if (wave.sample_rate != cfg.sample_rate)
    throw InvalidInput("compute_mel: waveform sample rate disagrees with cfg");
  for (double s : wave.samples)
    if (!std::isfinite(s)) throw InvalidInput("compute_mel: non-finite sample");

  const auto spec = stft(wave.samples, cfg);
  const auto fb = mel_filterbank(cfg);
  const int bins = cfg.n_fft / 2 + 1;
  MelSpectrogram mel;
  mel.hop_length = cfg.hop_length;
  mel.sample_rate = cfg.sample_rate;
  mel.values = Tensor({static_cast<int64_t>(spec.size()), cfg.n_mels});
  std::vector<double> mag(static_cast<size_t>(bins));
  for (size_t t = 0; t < spec.size(); ++t) {
    for (int k = 0; k < bins; ++k)
      mag[static_cast<size_t>(k)] = std::abs(spec[t][static_cast<size_t>(k)]);
    for (int m = 0; m < cfg.n_mels; ++m) {
      double e = 0.0;
      for (int k = 0; k < bins; ++k)
        e += fb[static_cast<size_t>(m)][static_cast<size_t>(k)] *
             mag[static_cast<size_t>(k)];
      mel.values.at(static_cast<int64_t>(t), m) =
          std::log(std::max(e, cfg.log_floor));
    }
  }
  return mel;
}

ProsodyBands slice_prosody_bands(const MelSpectrogram& mel) {
  if (mel.n_mels() < kProsodyBins) {
    throw InvalidInput("slice_prosody_bands: n_mels must be >= 20, got " +
                       std::to_string(mel.n_mels()));
  }
  ProsodyBands bands;
  bands.hop_length = mel.hop_length;
  bands.sample_rate = mel.sample_rate;
  bands.values = Tensor({mel.frames(), kProsodyBins});
  for (int64_t t = 0; t < mel.frames(); ++t)
    for (int64_t k = 0; k < kProsodyBins; ++k)
      bands.values.at(t, k) = mel.values.at(t, k);
  return bands;
}

PitchContour extract_pitch(const Waveform& wave, const FeatureConfig& cfg) {
  cfg.validate();
  if (wave.samples.empty()) throw InvalidInput("extract_pitch: empty waveform");
  const Framing fr = frame_signal(wave.samples, cfg);
  const int64_t lag_min = std::max<int64_t>(
      2, static_cast<int64_t>(std::floor(cfg.sample_rate / cfg.pitch_fmax)));
  const int64_t lag_max = std::min<int64_t>(
      cfg.n_fft / 2,
      static_cast<int64_t>(std::ceil(cfg.sample_rate / cfg.pitch_fmin)));
  PitchContour pc;
  pc.f0.assign(static_cast<size_t>(fr.frames), 0.0);
  pc.voiced.assign(static_cast<size_t>(fr.frames), false);
  std::vector<double> r(static_cast<size_t>(lag_max + 2), 0.0);
  for (int64_t t = 0; t < fr.frames; ++t) {
    const double* x = fr.padded.data() + t * cfg.hop_length;
    const int64_t n = cfg.n_fft;
    double energy = 0.0;
    for (int64_t i = 0; i < n; ++i) energy += x[i] * x[i];
    if (energy / static_cast<double>(n) < 1e-8) continue;  // silence gate
    // normalized autocorrelation over the lag range
    for (int64_t lag = lag_min - 1; lag <= lag_max + 1 && lag < n; ++lag) {
      double num = 0.0, e0 = 0.0, e1 = 0.0;
      for (int64_t i = 0; i + lag < n; ++i) {
        num += x[i] * x[i + lag];
        e0 += x[i] * x[i];
        e1 += x[i + lag] * x[i + lag];
      }
      const double denom = std::sqrt(e0 * e1);
      r[static_cast<size_t>(lag)] = denom > 1e-12 ? num / denom : 0.0;
    }
    double best = -1.0;
    for (int64_t lag = lag_min; lag <= lag_max; ++lag)
      best = std::max(best, r[static_cast<size_t>(lag)]);
    if (best < cfg.pitch_voicing_threshold) continue;
    // smallest local maximum within 0.01 of the global best; guards against
    // picking a period multiple when the signal is near-perfectly periodic
    int64_t chosen = -1;
    for (int64_t lag = lag_min; lag <= lag_max; ++lag) {
      if (r[static_cast<size_t>(lag)] >= r[static_cast<size_t>(lag - 1)] &&
          r[static_cast<size_t>(lag)] >= r[static_cast<size_t>(lag + 1)] &&
          r[static_cast<size_t>(lag)] >= best - 0.01) {
        chosen = lag;
        break;
      }
    }
    if (chosen < 0) continue;
    // parabolic interpolation around the chosen lag
    const double rm = r[static_cast<size_t>(chosen - 1)];
    const double r0 = r[static_cast<size_t>(chosen)];
    const double rp = r[static_cast<size_t>(chosen + 1)];
    const double denom = rm - 2.0 * r0 + rp;
    double delta = 0.0;
    if (std::abs(denom) > 1e-12) {
      delta = 0.5 * (rm - rp) / denom;
      delta = std::min(1.0, std::max(-1.0, delta));
    }
    const double lag_hat = static_cast<double>(chosen) + delta;
    pc.voiced[static_cast<size_t>(t)] = true;
    pc.f0[static_cast<size_t>(t)] = cfg.sample_rate / lag_hat;
  }
  return pc;
}

Waveform griffin_lim(const MelSpectrogram& mel, const FeatureConfig& cfg,
                     int iters, uint64_t seed) {
  cfg.validate();
  if (iters < 1) throw InvalidInput("griffin_lim: iters must be >= 1");
  if (mel.frames() < 1) throw InvalidInput("griffin_lim: empty mel");
  const auto lin = mel_to_linear(mel, cfg);
  const int64_t frames = mel.frames();
  const int bins = cfg.n_fft / 2 + 1;
  Rng rng(mix_seed(seed, 0x6c1f0215ULL));
  std::vector<std::vector<std::complex<double>>> spec(
      static_cast<size_t>(frames));
  for (int64_t t = 0; t < frames; ++t) {
    spec[static_cast<size_t>(t)].resize(static_cast<size_t>(bins));
    for (int k = 0; k < bins; ++k) {
      const double phase = rng.uniform(-kPi, kPi);
      spec[static_cast<size_t>(t)][static_cast<size_t>(k)] =
          std::polar(lin[static_cast<size_t>(t)][static_cast<size_t>(k)], phase);
    }
  }
  // accelerated updates: the phase comes from an over-relaxed estimate
  const double momentum = 0.9;
  std::vector<double> wave_samples;
  std::vector<std::vector<std::complex<double>>> prev;
  for (int it = 0; it < iters; ++it) {
    wave_samples = istft(spec, cfg);
    const auto re = stft(wave_samples, cfg);
    for (int64_t t = 0; t < frames; ++t) {
      for (int k = 0; k < bins; ++k) {
        std::complex<double> v = re[static_cast<size_t>(t)][static_cast<size_t>(k)];
        if (it > 0) {
          v += momentum * (v - prev[static_cast<size_t>(t)][static_cast<size_t>(k)]);
        }
        const double m = std::abs(v);
        const std::complex<double> ph =
            m > 1e-12 ? v / m : std::complex<double>(1.0, 0.0);
        spec[static_cast<size_t>(t)][static_cast<size_t>(k)] =
            ph * lin[static_cast<size_t>(t)][static_cast<size_t>(k)];
      }
    }
    prev = re;
  }
  wave_samples = istft(spec, cfg);
  // peak-normalize only when clipping would occur
  double peak = 0.0;
  for (double v : wave_samples) peak = std::max(peak, std::abs(v));
  if (peak > 1.0) {
    for (auto& v : wave_samples) v /= peak;
  }
  Waveform out;
  out.sample_rate = cfg.sample_rate;
  out.samples = std::move(wave_samples);
  return out;
}

FrameToPhonemeMap align_frames_to_phonemes(int64_t num_frames,
                                           std::vector<int64_t> durations,
                                           int64_t tolerance) {
  if (num_frames < 1) throw InvalidInput("align: num_frames must be >= 1");
  if (durations.empty()) throw InvalidInput("align: no durations");
  int64_t sum = 0;
  bool any_positive = false;
  for (int64_t d : durations) {
    if (d < 0) throw InvalidInput("align: negative duration");
    if (d > 0) any_positive = true;
    sum += d;
  }
  if (!any_positive) throw InvalidInput("align: all durations are zero");
  int64_t diff = num_frames - sum;
  if (std::llabs(diff) > tolerance) {
    throw AlignmentMismatch("align: duration sum " + std::to_string(sum) +
                            " vs " + std::to_string(num_frames) +
                            " frames exceeds tolerance " +
                            std::to_string(tolerance));
  }
  // absorb the slack in the last phoneme, walking backwards if a deficit
  // would drive a duration negative
  for (int64_t p = static_cast<int64_t>(durations.size()) - 1;
       diff != 0 && p >= 0; --p) {
    const int64_t take = std::max(durations[static_cast<size_t>(p)] * -1, diff);
    durations[static_cast<size_t>(p)] += take;
    diff -= take;
  }
  FrameToPhonemeMap map;
  map.durations = std::move(durations);
  map.assignment.reserve(static_cast<size_t>(num_frames));
  for (size_t p = 0; p < map.durations.size(); ++p) {
    for (int64_t i = 0; i < map.durations[p]; ++i)
      map.assignment.push_back(static_cast<int64_t>(p));
  }
  return map;
}

}  // namespace adatta
