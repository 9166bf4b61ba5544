#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pipeline/config.h"

namespace adatta {

struct SynthesisRequest {
  std::vector<int64_t> phoneme_ids;   // target text as phoneme ids
  std::vector<int64_t> durations;     // frames per phoneme; empty with
                                      // uniform_duration > 0 for quick demos
  int64_t uniform_duration = 0;
  std::string reference_audio;        // prompt wav: timbre + prosody source
  std::vector<int64_t> ref_phoneme_ids;  // optional prompt transcript
  std::vector<int64_t> ref_durations;    // optional prompt alignment
  std::string tts_checkpoint;
  std::string pllm_checkpoint;
  std::string motion_checkpoint;
  std::string output_path;            // .avi container
  std::string output_wav;             // optional audio dump
  std::string dump_frames_dir;        // optional numbered .ppm frames
  uint64_t seed = 0;
  bool force_hash = false;
};

struct SynthesisResult {
  std::string video_path;
  int64_t mel_frames = 0;
  int64_t video_frames = 0;
  double audio_seconds = 0.0;
  int64_t clamped_points = 0;
  uint64_t audio_hash = 0;             // over the 16-bit PCM payload
  std::vector<uint64_t> frame_hashes;  // per rendered frame
  std::vector<int64_t> prosody_codes;
};

// text + reference audio -> speech -> landmarks -> video. Deterministic for
// a fixed request (including seed). Any stage failure propagates with a
// "stage=<name>:" prefix and removes partial outputs.
SynthesisResult synthesize(const PipelineConfig& cfg,
                           const SynthesisRequest& req);

}  // namespace adatta
