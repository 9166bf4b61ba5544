// adatta command-line front end. Talks to the core exclusively through the
// shared library's C API. Exit codes: 0 success, 2 validation error,
// 3 training divergence, 4 I/O error.

#include <cstdint>
#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "adatta/adatta.h"

namespace {

struct ConfigDeleter {
  void operator()(ada_config* c) const { ada_config_free(c); }
};
using ConfigPtr = std::unique_ptr<ada_config, ConfigDeleter>;

int fail(ada_status status) {
  std::fprintf(stderr, "error: %s\n", ada_last_error());
  return static_cast<int>(status);
}

int apply_common(ada_config* cfg, const std::string& config_path,
                 const std::vector<std::string>& sets) {
  if (!config_path.empty()) {
    if (ada_status s = ada_config_load_file(cfg, config_path.c_str()); s != ADA_OK)
      return fail(s);
  }
  for (const auto& kv : sets) {
    const size_t eq = kv.find('=');
    if (eq == std::string::npos) {
      std::fprintf(stderr, "error: --set expects key=value, got '%s'\n",
                   kv.c_str());
      return 2;
    }
    if (ada_status s = ada_config_set(cfg, kv.substr(0, eq).c_str(),
                                      kv.substr(eq + 1).c_str());
        s != ADA_OK)
      return fail(s);
  }
  return 0;
}

std::vector<int64_t> parse_ids(const std::vector<std::string>& raw) {
  std::vector<int64_t> out;
  for (const auto& tok : raw) out.push_back(std::stoll(tok));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"adatta: text + reference audio -> talking avatar video"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> sets;
  app.add_option("--config", config_path, "pipeline config JSON file")
      ->envname("ADATTA_CONFIG");
  app.add_option("--set", sets, "override a config key, e.g. tts.train.max_steps=100");

  // train-* subcommands
  struct TrainArgs {
    std::string manifest, out, resume, tts_ckpt;
    uint64_t seed = 0;
    bool has_seed = false;
    bool strict = false, no_strict = false;
  };
  auto add_train = [&](CLI::App* sub, TrainArgs& args, bool needs_tts) {
    sub->add_option("--manifest", args.manifest, "corpus manifest (jsonl)")
        ->required();
    sub->add_option("--out", args.out, "output checkpoint path")->required();
    sub->add_option("--checkpoint", args.resume, "resume from checkpoint");
    if (needs_tts)
      sub->add_option("--tts-checkpoint", args.tts_ckpt,
                      "stage-1 TTS checkpoint providing codes and content")
          ->required();
    sub->add_flag("--strict", args.strict, "abort on bad corpus records");
    sub->add_flag("--no-strict", args.no_strict, "skip bad corpus records");
    sub->add_option_function<uint64_t>(
        "--seed", [&args](const uint64_t& v) { args.seed = v; args.has_seed = true; },
        "training seed");
  };

  TrainArgs tts_args, pllm_args, motion_args;
  CLI::App* cmd_tts = app.add_subcommand("train-tts", "stage-1 VQ TTS training");
  add_train(cmd_tts, tts_args, false);
  CLI::App* cmd_pllm =
      app.add_subcommand("train-pllm", "prosody language model training");
  add_train(cmd_pllm, pllm_args, true);
  CLI::App* cmd_motion =
      app.add_subcommand("train-motion", "audio-to-landmark VAE training");
  add_train(cmd_motion, motion_args, false);

  // synth
  CLI::App* cmd_synth = app.add_subcommand("synth", "synthesize a talking-avatar video");
  std::vector<std::string> phonemes_raw, durations_raw, ref_phonemes_raw,
      ref_durations_raw;
  std::string ref_audio, tts_ckpt, pllm_ckpt, motion_ckpt, out_path, out_wav,
      dump_frames;
  int64_t uniform_dur = 0;
  uint64_t synth_seed = 0;
  bool force_hash = false;
  cmd_synth->add_option("--phonemes", phonemes_raw, "target phoneme ids")
      ->required()
      ->delimiter(',');
  cmd_synth->add_option("--durations", durations_raw,
                        "per-phoneme durations in frames")
      ->delimiter(',');
  cmd_synth->add_option("--uniform-dur", uniform_dur,
                        "uniform per-phoneme duration fallback");
  cmd_synth->add_option("--ref-audio", ref_audio, "reference/prompt wav")
      ->required();
  cmd_synth->add_option("--ref-phonemes", ref_phonemes_raw,
                        "prompt phoneme ids (optional)")
      ->delimiter(',');
  cmd_synth->add_option("--ref-durations", ref_durations_raw,
                        "prompt durations in frames (optional)")
      ->delimiter(',');
  cmd_synth->add_option("--tts-checkpoint", tts_ckpt)->required();
  cmd_synth->add_option("--pllm-checkpoint", pllm_ckpt)->required();
  cmd_synth->add_option("--motion-checkpoint", motion_ckpt)->required();
  cmd_synth->add_option("--out", out_path, "output video (.avi)")->required();
  cmd_synth->add_option("--out-wav", out_wav, "also write the audio track");
  cmd_synth->add_option("--dump-frames", dump_frames,
                        "directory for numbered .ppm frames");
  cmd_synth->add_option("--seed", synth_seed, "synthesis seed");
  cmd_synth->add_flag("--force", force_hash, "skip checkpoint config-hash checks");

  // eval
  CLI::App* cmd_eval = app.add_subcommand(
      "eval", "codebook perplexity over a corpus; optional speaker similarity");
  std::string eval_manifest, eval_tts, eval_wav_a, eval_wav_b;
  cmd_eval->add_option("--tts-checkpoint", eval_tts)->required();
  cmd_eval->add_option("--manifest", eval_manifest);
  cmd_eval->add_option("--wav-a", eval_wav_a, "first wav for speaker similarity");
  cmd_eval->add_option("--wav-b", eval_wav_b, "second wav for speaker similarity");

  // probe
  CLI::App* cmd_probe = app.add_subcommand(
      "probe", "timbre-vs-prosody speaker probe (disentanglement check)");
  std::string probe_manifest, probe_tts;
  cmd_probe->add_option("--tts-checkpoint", probe_tts)->required();
  cmd_probe->add_option("--manifest", probe_manifest)->required();

  // demo-corpus
  CLI::App* cmd_demo =
      app.add_subcommand("demo-corpus", "generate a synthetic demo corpus");
  std::string demo_dir;
  int32_t demo_speakers = 2, demo_utts = 4;
  uint64_t demo_seed = 7;
  cmd_demo->add_option("--out", demo_dir, "output directory")->required();
  cmd_demo->add_option("--speakers", demo_speakers);
  cmd_demo->add_option("--utterances", demo_utts, "utterances per speaker");
  cmd_demo->add_option("--seed", demo_seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;  // usage problems are validation errors
  }

  ConfigPtr cfg(ada_config_create());
  if (int rc = apply_common(cfg.get(), config_path, sets); rc != 0) return rc;

  auto apply_train_overrides = [&](const TrainArgs& args, const char* section) -> int {
    if (args.has_seed) {
      const std::string key = std::string(section) + ".train.seed";
      if (ada_status s = ada_config_set(cfg.get(), key.c_str(),
                                        std::to_string(args.seed).c_str());
          s != ADA_OK)
        return fail(s);
    }
    if (args.strict || args.no_strict) {
      const std::string key = std::string(section) + ".train.strict";
      if (ada_status s = ada_config_set(cfg.get(), key.c_str(),
                                        args.strict ? "true" : "false");
          s != ADA_OK)
        return fail(s);
    }
    return 0;
  };

  if (cmd_tts->parsed()) {
    if (int rc = apply_train_overrides(tts_args, "tts"); rc != 0) return rc;
    if (ada_status s = ada_train_tts(
            cfg.get(), tts_args.manifest.c_str(), tts_args.out.c_str(),
            tts_args.resume.empty() ? nullptr : tts_args.resume.c_str());
        s != ADA_OK)
      return fail(s);
    std::printf("checkpoint written: %s\n", tts_args.out.c_str());
    return 0;
  }
  if (cmd_pllm->parsed()) {
    if (int rc = apply_train_overrides(pllm_args, "pllm"); rc != 0) return rc;
    if (ada_status s = ada_train_pllm(
            cfg.get(), pllm_args.manifest.c_str(), pllm_args.tts_ckpt.c_str(),
            pllm_args.out.c_str(),
            pllm_args.resume.empty() ? nullptr : pllm_args.resume.c_str());
        s != ADA_OK)
      return fail(s);
    std::printf("checkpoint written: %s\n", pllm_args.out.c_str());
    return 0;
  }
  if (cmd_motion->parsed()) {
    if (int rc = apply_train_overrides(motion_args, "motion"); rc != 0) return rc;
    if (ada_status s = ada_train_motion(
            cfg.get(), motion_args.manifest.c_str(), motion_args.out.c_str(),
            motion_args.resume.empty() ? nullptr : motion_args.resume.c_str());
        s != ADA_OK)
      return fail(s);
    std::printf("checkpoint written: %s\n", motion_args.out.c_str());
    return 0;
  }
  if (cmd_synth->parsed()) {
    const std::vector<int64_t> phonemes = parse_ids(phonemes_raw);
    const std::vector<int64_t> durations = parse_ids(durations_raw);
    const std::vector<int64_t> ref_phonemes = parse_ids(ref_phonemes_raw);
    const std::vector<int64_t> ref_durations = parse_ids(ref_durations_raw);
    ada_synth_request req{};
    req.phoneme_ids = phonemes.data();
    req.num_phonemes = phonemes.size();
    req.durations = durations.empty() ? nullptr : durations.data();
    req.num_durations = durations.size();
    req.uniform_duration = uniform_dur;
    req.reference_audio = ref_audio.c_str();
    req.ref_phoneme_ids = ref_phonemes.empty() ? nullptr : ref_phonemes.data();
    req.num_ref_phonemes = ref_phonemes.size();
    req.ref_durations = ref_durations.empty() ? nullptr : ref_durations.data();
    req.num_ref_durations = ref_durations.size();
    req.tts_checkpoint = tts_ckpt.c_str();
    req.pllm_checkpoint = pllm_ckpt.c_str();
    req.motion_checkpoint = motion_ckpt.c_str();
    req.output_path = out_path.c_str();
    req.output_wav = out_wav.empty() ? nullptr : out_wav.c_str();
    req.dump_frames_dir = dump_frames.empty() ? nullptr : dump_frames.c_str();
    req.seed = synth_seed;
    req.force_hash = force_hash ? 1 : 0;
    ada_synth_stats stats{};
    if (ada_status s = ada_synthesize(cfg.get(), &req, &stats); s != ADA_OK)
      return fail(s);
    std::printf(
        "video written: %s (%lld frames, %.3f s audio, %lld mel frames, "
        "audio_hash=%016llx)\n",
        out_path.c_str(), static_cast<long long>(stats.video_frames),
        stats.audio_seconds, static_cast<long long>(stats.mel_frames),
        static_cast<unsigned long long>(stats.audio_hash));
    return 0;
  }
  if (cmd_eval->parsed()) {
    if (!eval_manifest.empty()) {
      double perplexity = 0.0;
      if (ada_status s = ada_eval_codebook_perplexity(
              cfg.get(), eval_tts.c_str(), eval_manifest.c_str(), &perplexity);
          s != ADA_OK)
        return fail(s);
      std::printf("codebook_perplexity: %.4f\n", perplexity);
    }
    if (!eval_wav_a.empty() && !eval_wav_b.empty()) {
      double score = 0.0;
      if (ada_status s = ada_eval_speaker_similarity(
              cfg.get(), eval_tts.c_str(), eval_wav_a.c_str(),
              eval_wav_b.c_str(), &score);
          s != ADA_OK)
        return fail(s);
      std::printf("speaker_similarity: %.5f\n", score);
    }
    if (eval_manifest.empty() && (eval_wav_a.empty() || eval_wav_b.empty())) {
      std::fprintf(stderr,
                   "error: eval needs --manifest and/or --wav-a with --wav-b\n");
      return 2;
    }
    return 0;
  }
  if (cmd_probe->parsed()) {
    double timbre_acc = 0.0, prosody_acc = 0.0;
    if (ada_status s = ada_probe_disentanglement(
            cfg.get(), probe_tts.c_str(), probe_manifest.c_str(), &timbre_acc,
            &prosody_acc);
        s != ADA_OK)
      return fail(s);
    std::printf(
        "timbre_probe_accuracy: %.4f\nprosody_probe_accuracy: %.4f\ngap: %.4f\n",
        timbre_acc, prosody_acc, timbre_acc - prosody_acc);
    return 0;
  }
  if (cmd_demo->parsed()) {
    if (ada_status s = ada_make_demo_corpus(cfg.get(), demo_dir.c_str(),
                                            demo_speakers, demo_utts, demo_seed);
        s != ADA_OK)
      return fail(s);
    std::printf("demo corpus written under %s\n", demo_dir.c_str());
    return 0;
  }
  return 2;
}
