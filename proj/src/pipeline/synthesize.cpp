#include "pipeline/synthesize.h"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <memory>

#include "audio/features.h"
#include "core/errors.h"
#include "core/serialize.h"
#include "motion/model.h"
#include "pllm/model.h"
#include "render/avi.h"
#include "render/raster.h"
#include "tts/model.h"

namespace adatta {

namespace fs = std::filesystem;

namespace {

uint64_t pcm_hash(const Waveform& wave) {
  uint64_t h = 1469598103934665603ULL;
  for (double v : wave.samples) {
    const double clamped = std::min(1.0, std::max(-1.0, v));
    const uint16_t s = static_cast<uint16_t>(
        static_cast<int16_t>(std::lround(clamped * 32767.0)));
    h ^= static_cast<uint8_t>(s & 0xff);
    h *= 1099511628211ULL;
    h ^= static_cast<uint8_t>(s >> 8);
    h *= 1099511628211ULL;
  }
  return h;
}

[[noreturn]] void rethrow_tagged(const std::string& stage, const Error& e) {
  switch (e.kind()) {
    case ErrorKind::kIo:
      throw IoError("stage=" + stage + ": " + e.what());
    case ErrorKind::kDiverged:
      throw DivergedError("stage=" + stage + ": " + e.what());
    default:
      throw InvalidInput("stage=" + stage + ": " + e.what());
  }
}

template <typename Fn>
auto run_stage(const std::string& stage, Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    rethrow_tagged(stage, e);
  }
}

}  // namespace

SynthesisResult synthesize(const PipelineConfig& cfg,
                           const SynthesisRequest& req) {
  cfg.validate();
  if (req.phoneme_ids.empty())
    throw InvalidInput("synthesize: no target phonemes");
  std::vector<int64_t> durations = req.durations;
  if (durations.empty()) {
    if (req.uniform_duration < 1)
      throw InvalidInput(
          "synthesize: provide per-phoneme durations or uniform_duration");
    durations.assign(req.phoneme_ids.size(), req.uniform_duration);
  }
  if (durations.size() != req.phoneme_ids.size())
    throw InvalidInput("synthesize: durations length != phoneme count");
  if (req.output_path.empty())
    throw InvalidInput("synthesize: missing output path");

  // stage: load — checkpoints must agree with the active config
  auto tts = std::make_unique<TtsModel>(cfg.tts, cfg.features.n_mels, 0);
  auto pllm = std::make_unique<PllmModel>(cfg.pllm, cfg.tts.d_model,
                                          cfg.tts.codebook_size, 0);
  auto motion =
      std::make_unique<MotionModel>(cfg.motion, cfg.features.n_mels, 0);
  run_stage("load", [&] {
    tts->load_state(load_checkpoint(req.tts_checkpoint, "tts",
                                    config_hash(cfg, "tts"), req.force_hash));
    pllm->load_state(load_checkpoint(req.pllm_checkpoint, "pllm",
                                     config_hash(cfg, "pllm"), req.force_hash));
    motion->load_state(load_checkpoint(req.motion_checkpoint, "motion",
                                       config_hash(cfg, "motion"),
                                       req.force_hash));
    return 0;
  });

  SynthesisResult result;
  result.video_path = req.output_path;
  const bool frames_dir_preexisted =
      !req.dump_frames_dir.empty() && fs::exists(req.dump_frames_dir);
  auto cleanup_partial = [&]() {
    std::error_code ec;
    fs::remove(req.output_path, ec);
    if (!req.output_wav.empty()) fs::remove(req.output_wav, ec);
    if (!req.dump_frames_dir.empty() && fs::exists(req.dump_frames_dir)) {
      // remove only the frames this run wrote; drop the directory when this
      // run created it
      for (const auto& entry : fs::directory_iterator(req.dump_frames_dir, ec)) {
        const std::string name = entry.path().filename().string();
        if (name.rfind("frame_", 0) == 0 && entry.path().extension() == ".ppm")
          fs::remove(entry.path(), ec);
      }
      if (!frames_dir_preexisted) fs::remove(req.dump_frames_dir, ec);
    }
  };

  try {
    // stage: features — prompt audio front end
    const Waveform ref_wave = run_stage(
        "features", [&] { return read_wav(req.reference_audio); });
    const MelSpectrogram ref_mel =
        run_stage("features", [&] { return compute_mel(ref_wave, cfg.features); });

    // stage: tts — prompt encodings
    Tensor timbre;
    std::vector<int64_t> prompt_codes;
    Tensor prompt_content;
    run_stage("tts", [&] {
      timbre = tts->encode_timbre(ref_mel);
      std::vector<int64_t> ref_phonemes = req.ref_phoneme_ids;
      std::vector<int64_t> ref_durs = req.ref_durations;
      if (ref_durs.empty()) {
        // pseudo-alignment: fixed-length spans over the prompt frames with
        // a blank prompt transcript
        const int64_t span = cfg.pllm.prompt_span_frames;
        int64_t remaining = ref_mel.frames();
        while (remaining > 0) {
          ref_durs.push_back(std::min(span, remaining));
          remaining -= std::min(span, remaining);
        }
        ref_phonemes.assign(ref_durs.size(), 0);
      }
      if (ref_phonemes.size() != ref_durs.size())
        throw InvalidInput("reference phonemes/durations length mismatch");
      const FrameToPhonemeMap ref_align = align_frames_to_phonemes(
          ref_mel.frames(), ref_durs, cfg.features.align_tolerance);
      const ProsodyBands ref_bands = slice_prosody_bands(ref_mel);
      prompt_codes = tts->encode_prosody(ref_bands, ref_align).codes;
      prompt_content = tts->encode_text(ref_phonemes);
      // long references: keep the most recent prompt spans so the packed
      // transformer sequence stays within its length bound
      const int64_t lt = static_cast<int64_t>(req.phoneme_ids.size());
      const int64_t max_lp = 256 - lt;
      const int64_t lp = static_cast<int64_t>(prompt_codes.size());
      if (max_lp < 1)
        throw InvalidInput("synthesize: target too long for the prosody model");
      if (lp > max_lp) {
        prompt_codes.erase(prompt_codes.begin(),
                           prompt_codes.begin() + (lp - max_lp));
        Tensor tail({max_lp, prompt_content.cols()});
        for (int64_t r = 0; r < max_lp; ++r)
          for (int64_t c = 0; c < prompt_content.cols(); ++c)
            tail.at(r, c) = prompt_content.at(lp - max_lp + r, c);
        prompt_content = std::move(tail);
      }
      return 0;
    });

    // stage: pllm — predict target prosody codes
    const Tensor target_content = run_stage(
        "tts", [&] { return tts->encode_text(req.phoneme_ids); });
    run_stage("pllm", [&] {
      PllmInput input;
      input.prompt_content = prompt_content;
      input.prompt_codes = prompt_codes;
      input.target_content = target_content;
      result.prosody_codes =
          pllm->predict(input, static_cast<int64_t>(req.phoneme_ids.size()),
                        cfg.pllm.sampling, mix_seed(req.seed, 0x11aULL));
      return 0;
    });

    // stage: tts — decode the target mel
    int64_t total_frames = 0;
    for (int64_t d : durations) total_frames += d;
    const FrameToPhonemeMap align = run_stage("tts", [&] {
      return align_frames_to_phonemes(total_frames, durations,
                                      cfg.features.align_tolerance);
    });
    const MelSpectrogram mel_hat = run_stage("tts", [&] {
      return tts->decode_mel(target_content, timbre, result.prosody_codes,
                             align, cfg.features);
    });
    result.mel_frames = mel_hat.frames();

    // stage: vocoder
    const Waveform wave = run_stage("vocoder", [&] {
      return griffin_lim(mel_hat, cfg.features, cfg.features.griffin_lim_iters,
                         mix_seed(req.seed, 0x91ULL));
    });
    result.audio_seconds = wave.seconds();
    result.audio_hash = pcm_hash(wave);

    // stage: motion
    LandmarkSequence lms = run_stage("motion", [&] {
      const AudioFeatureSequence feats =
          motion->encode_audio_features(wave, cfg.features);
      LandmarkSequence raw = motion->vae_audio_to_motion(
          feats, MotionMode::kMean, mix_seed(req.seed, 0x77ULL));
      return motion->postnet_refine(raw);
    });

    // stage: render
    std::vector<ImageFrame> frames;
    run_stage("render", [&] {
      const double motion_rate = static_cast<double>(cfg.features.sample_rate) /
                                 cfg.features.hop_length;
      const std::vector<int64_t> picks = video_frame_indices(
          lms.frames(), motion_rate, result.audio_seconds, cfg.render.fps);
      frames.reserve(picks.size());
      for (int64_t m : picks) {
        frames.push_back(
            rasterize_landmarks(lms, m, cfg.render, &result.clamped_points));
        result.frame_hashes.push_back(image_hash(frames.back()));
      }
      if (!req.dump_frames_dir.empty()) {
        fs::create_directories(req.dump_frames_dir);
        for (size_t i = 0; i < frames.size(); ++i) {
          char name[32];
          std::snprintf(name, sizeof(name), "frame_%06zu.ppm", i);
          write_ppm((fs::path(req.dump_frames_dir) / name).string(), frames[i]);
        }
      }
      return 0;
    });
    result.video_frames = static_cast<int64_t>(frames.size());

    // stage: mux
    run_stage("mux", [&] {
      compose_video(frames, wave, cfg.render, req.output_path);
      if (!req.output_wav.empty()) write_wav(req.output_wav, wave);
      return 0;
    });
  } catch (...) {
    cleanup_partial();
    throw;
  }
  return result;
}

}  // namespace adatta
