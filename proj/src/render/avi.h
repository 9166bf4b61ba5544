#pragma once

#include <string>
#include <vector>

#include "audio/wav_io.h"
#include "pipeline/config.h"
#include "render/raster.h"

namespace adatta {

// Writes an uncompressed AVI container: one 24-bit RGB ('DIB ') video
// stream at cfg.fps and one 16-bit PCM mono audio stream, interleaved per
// frame, with an idx1 index. Output bytes depend only on the inputs.
void write_avi(const std::string& path, const std::vector<ImageFrame>& frames,
               const Waveform& audio, int fps);

// Validates stream lengths against each other before muxing:
// |frames/fps - audio seconds| must stay within one frame plus muxer slack.
void compose_video(const std::vector<ImageFrame>& frames,
                   const Waveform& audio, const RenderConfig& cfg,
                   const std::string& out_path);

// nearest-frame selection from the landmark rate to the video rate;
// returns round(audio_seconds * fps) indices into [0, num_motion_frames)
std::vector<int64_t> video_frame_indices(int64_t num_motion_frames,
                                         double motion_rate_hz,
                                         double audio_seconds, int fps);

}  // namespace adatta
