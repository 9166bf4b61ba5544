/*
 * adatta — text-to-talking-avatar pipeline, C API.
 *
 * All functionality is exposed through opaque handles and status codes so
 * the shared library keeps a stable C ABI. Functions return ADA_OK on
 * success; on failure ada_last_error() holds a message for the calling
 * thread.
 */
#ifndef ADATTA_H
#define ADATTA_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define ADATTA_API __declspec(dllexport)
#else
#define ADATTA_API __attribute__((visibility("default")))
#endif

typedef enum ada_status {
  ADA_OK = 0,
  ADA_ERR_INVALID = 2,  /* validation / bad input */
  ADA_ERR_DIVERGED = 3, /* training reached a non-finite loss */
  ADA_ERR_IO = 4,       /* file system failure */
} ada_status;

typedef struct ada_config ada_config;

ADATTA_API const char* ada_version(void);

/* thread-local message describing the most recent failure */
ADATTA_API const char* ada_last_error(void);

/* ---- configuration (defaults <- json file <- individual overrides) ---- */
ADATTA_API ada_config* ada_config_create(void);
ADATTA_API ada_status ada_config_load_file(ada_config* cfg, const char* path);
ADATTA_API ada_status ada_config_set(ada_config* cfg, const char* dotted_key,
                                     const char* value);
ADATTA_API void ada_config_free(ada_config* cfg);

/* ---- training; resume_checkpoint may be NULL ---- */
ADATTA_API ada_status ada_train_tts(const ada_config* cfg,
                                    const char* manifest_path,
                                    const char* out_checkpoint,
                                    const char* resume_checkpoint);
ADATTA_API ada_status ada_train_pllm(const ada_config* cfg,
                                     const char* manifest_path,
                                     const char* tts_checkpoint,
                                     const char* out_checkpoint,
                                     const char* resume_checkpoint);
ADATTA_API ada_status ada_train_motion(const ada_config* cfg,
                                       const char* manifest_path,
                                       const char* out_checkpoint,
                                       const char* resume_checkpoint);

/* ---- synthesis ---- */
typedef struct ada_synth_request {
  const int64_t* phoneme_ids;
  size_t num_phonemes;
  const int64_t* durations; /* frames per phoneme; NULL with uniform_duration */
  size_t num_durations;
  int64_t uniform_duration;
  const char* reference_audio;
  const int64_t* ref_phoneme_ids; /* optional prompt transcript, may be NULL */
  size_t num_ref_phonemes;
  const int64_t* ref_durations;
  size_t num_ref_durations;
  const char* tts_checkpoint;
  const char* pllm_checkpoint;
  const char* motion_checkpoint;
  const char* output_path;     /* .avi */
  const char* output_wav;      /* optional, may be NULL */
  const char* dump_frames_dir; /* optional, may be NULL */
  uint64_t seed;
  int force_hash; /* nonzero: skip checkpoint config-hash checks */
} ada_synth_request;

typedef struct ada_synth_stats {
  int64_t mel_frames;
  int64_t video_frames;
  double audio_seconds;
  uint64_t audio_hash;
  int64_t clamped_points;
} ada_synth_stats;

/* stats may be NULL */
ADATTA_API ada_status ada_synthesize(const ada_config* cfg,
                                     const ada_synth_request* request,
                                     ada_synth_stats* stats);

/* ---- evaluation ---- */
ADATTA_API ada_status ada_eval_speaker_similarity(const ada_config* cfg,
                                                  const char* tts_checkpoint,
                                                  const char* wav_a,
                                                  const char* wav_b,
                                                  double* out_score);
ADATTA_API ada_status ada_eval_codebook_perplexity(const ada_config* cfg,
                                                   const char* tts_checkpoint,
                                                   const char* manifest_path,
                                                   double* out_perplexity);
ADATTA_API ada_status ada_probe_disentanglement(const ada_config* cfg,
                                                const char* tts_checkpoint,
                                                const char* manifest_path,
                                                double* out_timbre_accuracy,
                                                double* out_prosody_accuracy);

/* ---- synthetic demo corpus (wavs, landmark tracks, manifest.jsonl) ---- */
ADATTA_API ada_status ada_make_demo_corpus(const ada_config* cfg,
                                           const char* out_dir,
                                           int32_t num_speakers,
                                           int32_t utterances_per_speaker,
                                           uint64_t seed);

#ifdef __cplusplus
}
#endif

#endif /* ADATTA_H */
