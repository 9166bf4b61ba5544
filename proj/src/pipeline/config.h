#pragma once

#include <cstdint>
#include <string>

#include "audio/features.h"

namespace adatta {

// Shared training knobs. Every stochastic choice in a training run is
// derived from (seed, step), so runs resume bit-exactly from checkpoints.
struct TrainConfig {
  int64_t max_steps = 2000;
  int batch_size = 1;
  double lr = 2e-3;
  int64_t adv_warmup_steps = 500;
  double lambda_adv = 0.05;
  double beta_commit = 0.25;
  int64_t reset_patience = 200;
  uint64_t seed = 1234;
  bool strict = true;
};

struct SamplingConfig {
  double temperature = 0.8;
  int64_t top_k = 8;
  uint64_t seed = 0;
};

struct TtsConfig {
  int64_t d_model = 192;
  int64_t d_timbre = 192;
  int64_t d_code = 192;
  int64_t codebook_size = 64;
  int64_t phoneme_vocab = 64;
  int64_t conv_kernel = 5;
  int64_t encoder_blocks = 2;
  int64_t decoder_blocks = 3;
  int64_t disc_hidden = 64;
  int64_t disc_window = 32;
  bool adv_updates_timbre = true;
  TrainConfig train;
};

struct PllmConfig {
  int64_t layers = 4;
  int64_t heads = 4;
  int64_t width = 256;
  int64_t prompt_span_frames = 8;  // pseudo-alignment span when the prompt
                                   // audio comes without phoneme durations
  TrainConfig train;
  SamplingConfig sampling;
};

struct MotionConfig {
  int64_t d_feat = 64;
  int64_t d_latent = 16;
  int64_t hidden = 128;
  int64_t encoder_blocks = 2;
  int64_t decoder_blocks = 3;
  double lambda_kl = 1e-2;
  int64_t kl_warmup_steps = 200;
  int64_t postnet_steps = 400;  // postnet trains after the VAE, same clip
  TrainConfig train;
};

struct RenderConfig {
  int width = 256;
  int height = 256;
  int fps = 25;
  int point_radius = 2;
};

struct PipelineConfig {
  FeatureConfig features;
  TtsConfig tts;
  PllmConfig pllm;
  MotionConfig motion;
  RenderConfig render;

  void validate() const;
};

PipelineConfig default_config();

// Layered configuration: defaults <- JSON file <- individual overrides.
PipelineConfig load_config_file(const std::string& path);
void overlay_config_file(PipelineConfig& cfg, const std::string& path);
void apply_override(PipelineConfig& cfg, const std::string& dotted_key,
                    const std::string& value);

// Canonical config text per checkpoint kind; hashed into checkpoints so
// incompatible checkpoints refuse to load together.
std::string canonical_config_text(const PipelineConfig& cfg,
                                  const std::string& kind);
uint64_t config_hash(const PipelineConfig& cfg, const std::string& kind);

}  // namespace adatta
