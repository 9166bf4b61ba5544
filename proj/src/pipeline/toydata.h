#pragma once

#include <cstdint>
#include <string>

#include "motion/landmark_io.h"
#include "pipeline/config.h"
#include "pipeline/manifest.h"

namespace adatta {

// Synthetic demo corpus. Utterances are harmonic phoneme tones whose pitch
// and low-frequency envelope depend only on the phoneme sequence, while
// speaker identity lives entirely in a high-band resonance profile; the
// first 20 mel bins are therefore nearly speaker-invariant by construction.
// Landmark tracks are a schematic face whose mouth follows signal energy.
struct ToyCorpusSpec {
  int num_speakers = 2;
  int utterances_per_speaker = 4;
  int phonemes_per_utterance = 6;
  int base_frames_per_phoneme = 10;
  bool with_landmarks = true;
  uint64_t seed = 7;
};

// writes wav + landmark files plus manifest.jsonl under dir; returns the
// manifest path
std::string make_toy_corpus(const std::string& dir, const PipelineConfig& cfg,
                            const ToyCorpusSpec& spec);

// neutral schematic face, one frame of 68 x 3 normalized coordinates
LandmarkSequence face_template();

// deterministic toy waveform for one phoneme sequence and speaker profile
Waveform synth_toy_utterance(const std::vector<int64_t>& phonemes,
                             const std::vector<int64_t>& durations,
                             int speaker, const FeatureConfig& feat,
                             uint64_t seed);

// landmark track driven by the waveform's per-frame energy
LandmarkSequence synth_toy_landmarks(const Waveform& wave,
                                     const FeatureConfig& feat);

}  // namespace adatta
