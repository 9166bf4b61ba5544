#include "adatta/adatta.h"

#include <cstdio>
#include <cstring>
#include <string>

#include "core/errors.h"
#include "motion/model.h"
#include "pipeline/config.h"
#include "pipeline/manifest.h"
#include "pipeline/metrics.h"
#include "pipeline/synthesize.h"
#include "pipeline/toydata.h"
#include "pllm/model.h"
#include "tts/train.h"

using namespace adatta;

struct ada_config {
  PipelineConfig cfg;
};

namespace {

thread_local std::string g_last_error;

ada_status status_for(const Error& e) {
  g_last_error = e.what();
  switch (e.kind()) {
    case ErrorKind::kIo:
      return ADA_ERR_IO;
    case ErrorKind::kDiverged:
      return ADA_ERR_DIVERGED;
    default:
      return ADA_ERR_INVALID;
  }
}

template <typename Fn>
ada_status guarded(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return ADA_OK;
  } catch (const Error& e) {
    return status_for(e);
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return ADA_ERR_INVALID;
  } catch (...) {
    g_last_error = "unknown error";
    return ADA_ERR_INVALID;
  }
}

ada_status require(bool ok, const char* msg) {
  if (ok) return ADA_OK;
  g_last_error = msg;
  return ADA_ERR_INVALID;
}

std::vector<int64_t> to_vec(const int64_t* data, size_t n) {
  return data ? std::vector<int64_t>(data, data + n) : std::vector<int64_t>();
}

}  // namespace

extern "C" {

const char* ada_version(void) { return "0.1.0"; }

const char* ada_last_error(void) { return g_last_error.c_str(); }

ada_config* ada_config_create(void) { return new ada_config{default_config()}; }

ada_status ada_config_load_file(ada_config* cfg, const char* path) {
  if (ada_status s = require(cfg && path, "null argument"); s != ADA_OK) return s;
  return guarded([&] {
    overlay_config_file(cfg->cfg, path);
    cfg->cfg.validate();
  });
}

ada_status ada_config_set(ada_config* cfg, const char* dotted_key,
                          const char* value) {
  if (ada_status s = require(cfg && dotted_key && value, "null argument");
      s != ADA_OK)
    return s;
  return guarded([&] {
    apply_override(cfg->cfg, dotted_key, value);
    cfg->cfg.validate();
  });
}

void ada_config_free(ada_config* cfg) { delete cfg; }

ada_status ada_train_tts(const ada_config* cfg, const char* manifest_path,
                         const char* out_checkpoint,
                         const char* resume_checkpoint) {
  if (ada_status s = require(cfg && manifest_path && out_checkpoint,
                             "null argument");
      s != ADA_OK)
    return s;
  return guarded([&] {
    const CorpusManifest corpus = load_corpus(manifest_path);
    Stage1Trainer trainer(cfg->cfg, corpus);
    if (resume_checkpoint && *resume_checkpoint)
      trainer.resume_from(resume_checkpoint);
    trainer.run([&](int64_t step, const Stage1LossReport& rep) {
      if (step % 500 == 0 || step == cfg->cfg.tts.train.max_steps) {
        std::fprintf(stderr,
                     "train-tts step %lld/%lld recon %.4f vq %.4f adv_g %.4f\n",
                     static_cast<long long>(step),
                     static_cast<long long>(cfg->cfg.tts.train.max_steps),
                     rep.recon_l2, rep.vq_loss, rep.adv_g_loss);
      }
    });
    trainer.save(out_checkpoint);
  });
}

ada_status ada_train_pllm(const ada_config* cfg, const char* manifest_path,
                          const char* tts_checkpoint,
                          const char* out_checkpoint,
                          const char* resume_checkpoint) {
  if (ada_status s = require(
          cfg && manifest_path && tts_checkpoint && out_checkpoint,
          "null argument");
      s != ADA_OK)
    return s;
  return guarded([&] {
    const CorpusManifest corpus = load_corpus(manifest_path);
    TtsModel tts(cfg->cfg.tts, cfg->cfg.features.n_mels, 0);
    tts.load_state(load_checkpoint(tts_checkpoint, "tts",
                                   config_hash(cfg->cfg, "tts")));
    FeatureCache features(corpus, cfg->cfg.features);
    PllmTrainer trainer(cfg->cfg,
                        build_pllm_examples(corpus, tts, features,
                                            cfg->cfg.pllm.train.strict));
    if (resume_checkpoint && *resume_checkpoint)
      trainer.resume_from(resume_checkpoint);
    trainer.run([&](int64_t step, double ce) {
      if (step % 500 == 0 || step == cfg->cfg.pllm.train.max_steps) {
        std::fprintf(stderr, "train-pllm step %lld/%lld ce %.4f\n",
                     static_cast<long long>(step),
                     static_cast<long long>(cfg->cfg.pllm.train.max_steps), ce);
      }
    });
    trainer.save(out_checkpoint);
  });
}

ada_status ada_train_motion(const ada_config* cfg, const char* manifest_path,
                            const char* out_checkpoint,
                            const char* resume_checkpoint) {
  if (ada_status s = require(cfg && manifest_path && out_checkpoint,
                             "null argument");
      s != ADA_OK)
    return s;
  return guarded([&] {
    const CorpusManifest corpus = load_corpus(manifest_path);
    MotionTrainer trainer(cfg->cfg, corpus);
    if (resume_checkpoint && *resume_checkpoint)
      trainer.resume_from(resume_checkpoint);
    trainer.run([&](int64_t step, const VAELossReport& rep) {
      if (step % 500 == 0 || step == cfg->cfg.motion.train.max_steps) {
        std::fprintf(stderr, "train-motion step %lld/%lld recon %.5f kl %.5f\n",
                     static_cast<long long>(step),
                     static_cast<long long>(cfg->cfg.motion.train.max_steps),
                     rep.recon, rep.kl);
      }
    });
    trainer.save(out_checkpoint);
  });
}

ada_status ada_synthesize(const ada_config* cfg,
                          const ada_synth_request* request,
                          ada_synth_stats* stats) {
  if (ada_status s = require(cfg && request, "null argument"); s != ADA_OK)
    return s;
  if (ada_status s = require(request->reference_audio && request->output_path &&
                                 request->tts_checkpoint &&
                                 request->pllm_checkpoint &&
                                 request->motion_checkpoint,
                             "missing request field");
      s != ADA_OK)
    return s;
  return guarded([&] {
    SynthesisRequest req;
    req.phoneme_ids = to_vec(request->phoneme_ids, request->num_phonemes);
    req.durations = to_vec(request->durations, request->num_durations);
    req.uniform_duration = request->uniform_duration;
    req.reference_audio = request->reference_audio;
    req.ref_phoneme_ids =
        to_vec(request->ref_phoneme_ids, request->num_ref_phonemes);
    req.ref_durations =
        to_vec(request->ref_durations, request->num_ref_durations);
    req.tts_checkpoint = request->tts_checkpoint;
    req.pllm_checkpoint = request->pllm_checkpoint;
    req.motion_checkpoint = request->motion_checkpoint;
    req.output_path = request->output_path;
    if (request->output_wav) req.output_wav = request->output_wav;
    if (request->dump_frames_dir) req.dump_frames_dir = request->dump_frames_dir;
    req.seed = request->seed;
    req.force_hash = request->force_hash != 0;
    const SynthesisResult res = synthesize(cfg->cfg, req);
    if (stats) {
      stats->mel_frames = res.mel_frames;
      stats->video_frames = res.video_frames;
      stats->audio_seconds = res.audio_seconds;
      stats->audio_hash = res.audio_hash;
      stats->clamped_points = res.clamped_points;
    }
  });
}

ada_status ada_eval_speaker_similarity(const ada_config* cfg,
                                       const char* tts_checkpoint,
                                       const char* wav_a, const char* wav_b,
                                       double* out_score) {
  if (ada_status s = require(cfg && tts_checkpoint && wav_a && wav_b && out_score,
                             "null argument");
      s != ADA_OK)
    return s;
  return guarded([&] {
    TtsModel tts(cfg->cfg.tts, cfg->cfg.features.n_mels, 0);
    tts.load_state(load_checkpoint(tts_checkpoint, "tts",
                                   config_hash(cfg->cfg, "tts")));
    const Tensor a =
        tts.encode_timbre(compute_mel(read_wav(wav_a), cfg->cfg.features));
    const Tensor b =
        tts.encode_timbre(compute_mel(read_wav(wav_b), cfg->cfg.features));
    *out_score = eval_speaker_similarity(a, b);
  });
}

ada_status ada_eval_codebook_perplexity(const ada_config* cfg,
                                        const char* tts_checkpoint,
                                        const char* manifest_path,
                                        double* out_perplexity) {
  if (ada_status s = require(cfg && tts_checkpoint && manifest_path &&
                                 out_perplexity,
                             "null argument");
      s != ADA_OK)
    return s;
  return guarded([&] {
    const CorpusManifest corpus = load_corpus(manifest_path);
    TtsModel tts(cfg->cfg.tts, cfg->cfg.features.n_mels, 0);
    tts.load_state(load_checkpoint(tts_checkpoint, "tts",
                                   config_hash(cfg->cfg, "tts")));
    FeatureCache features(corpus, cfg->cfg.features);
    std::vector<int64_t> pooled;
    for (size_t i = 0; i < corpus.size(); ++i) {
      const UtteranceFeatures& uf = features.get(i);
      const ProsodyEncoding enc = tts.encode_prosody(uf.bands, uf.align);
      pooled.insert(pooled.end(), enc.codes.begin(), enc.codes.end());
    }
    *out_perplexity = codebook_perplexity(pooled);
  });
}

ada_status ada_probe_disentanglement(const ada_config* cfg,
                                     const char* tts_checkpoint,
                                     const char* manifest_path,
                                     double* out_timbre_accuracy,
                                     double* out_prosody_accuracy) {
  if (ada_status s = require(cfg && tts_checkpoint && manifest_path &&
                                 out_timbre_accuracy && out_prosody_accuracy,
                             "null argument");
      s != ADA_OK)
    return s;
  return guarded([&] {
    const CorpusManifest corpus = load_corpus(manifest_path);
    TtsModel tts(cfg->cfg.tts, cfg->cfg.features.n_mels, 0);
    tts.load_state(load_checkpoint(tts_checkpoint, "tts",
                                   config_hash(cfg->cfg, "tts")));
    FeatureCache features(corpus, cfg->cfg.features);
    const DisentanglementReport rep =
        disentanglement_probe(cfg->cfg, corpus, tts, features);
    *out_timbre_accuracy = rep.timbre_accuracy;
    *out_prosody_accuracy = rep.prosody_accuracy;
  });
}

ada_status ada_make_demo_corpus(const ada_config* cfg, const char* out_dir,
                                int32_t num_speakers,
                                int32_t utterances_per_speaker, uint64_t seed) {
  if (ada_status s = require(cfg && out_dir, "null argument"); s != ADA_OK)
    return s;
  return guarded([&] {
    ToyCorpusSpec spec;
    spec.num_speakers = num_speakers;
    spec.utterances_per_speaker = utterances_per_speaker;
    spec.seed = seed;
    make_toy_corpus(out_dir, cfg->cfg, spec);
  });
}

}  // extern "C"
