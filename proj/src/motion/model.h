#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "audio/features.h"
#include "core/autograd.h"
#include "core/nn.h"
#include "core/serialize.h"
#include "motion/landmark_io.h"
#include "pipeline/config.h"
#include "pipeline/manifest.h"

namespace adatta {

struct AudioFeatureSequence {
  Tensor content_features;  // [T, d_feat], learned content encoder output
  PitchContour pitch;       // same T

  int64_t frames() const { return content_features.rows(); }
};

struct VAELossReport {
  double recon = 0.0;
  double kl = 0.0;
  double lambda_kl = 0.0;
  double total = 0.0;  // recon + lambda_kl * kl
};

// recon = mean squared landmark error, kl = closed-form divergence of
// N(mu, exp(logvar)) from the unit normal, averaged over elements
VAELossReport vae_loss(const Tensor& recon_lms, const Tensor& target_lms,
                       const Tensor& posterior_mu,
                       const Tensor& posterior_logvar, double lambda_kl);

enum class MotionMode { kMean, kSample };

// Audio-to-motion stack: a learned convolutional content encoder over mel
// frames (standing in for a pretrained speech feature extractor behind the
// same interface), a conditional VAE predicting all landmark frames in one
// forward pass, and an identity-specific residual postnet.
class MotionModel {
 public:
  MotionModel(const MotionConfig& cfg, int n_mels, uint64_t init_seed);

  AudioFeatureSequence encode_audio_features(const Waveform& wave,
                                             const FeatureConfig& feat) const;

  // inference path: latent comes from the prior (zeros in mean mode,
  // seeded standard normal in sample mode)
  LandmarkSequence vae_audio_to_motion(const AudioFeatureSequence& features,
                                       MotionMode mode, uint64_t seed) const;

  LandmarkSequence postnet_refine(const LandmarkSequence& lms) const;

  // ---- graph-building forwards ----
  ag::Var content_features_var(const Tensor& mel) const;
  ag::Var conditioning_var(const ag::Var& content,
                           const PitchContour& pitch) const;
  // posterior parameters from conditioning + target landmarks: ([T,dz] mu,
  // [T,dz] logvar)
  std::pair<ag::Var, ag::Var> posterior_var(const ag::Var& cond,
                                            const Tensor& target_lms) const;
  ag::Var decode_var(const ag::Var& cond, const ag::Var& z) const;
  ag::Var postnet_var(const ag::Var& lms) const;

  const MotionConfig& cfg() const { return cfg_; }
  nn::ParamRegistry& params() { return params_; }
  LandmarkNormalization& normalization() { return norm_; }
  const LandmarkNormalization& normalization() const { return norm_; }

  void save_state(Checkpoint& ckpt) const;
  void load_state(const Checkpoint& ckpt);

 private:
  MotionConfig cfg_;
  int n_mels_;
  nn::ParamRegistry params_;
  LandmarkNormalization norm_;

  nn::Dense feat_in_;
  std::vector<nn::ConvBlock> feat_blocks_;
  nn::Dense enc_in_;
  std::vector<nn::ConvBlock> enc_blocks_;
  nn::Dense enc_out_;  // -> [T, 2*d_latent]
  nn::Dense dec_in_;
  std::vector<nn::ConvBlock> dec_blocks_;
  nn::Dense dec_out_;  // -> [T, 204]
  nn::Dense post_in_;
  nn::ConvBlock post_block_;
  nn::Dense post_out_;  // zero-initialized: untrained postnet is identity
};

using MotionCallback = std::function<void(int64_t step, const VAELossReport&)>;

// Two-phase training on the identity clip(s): the VAE (with the feature
// encoder) first, then the residual postnet against the VAE's mean-mode
// output.
class MotionTrainer {
 public:
  MotionTrainer(const PipelineConfig& cfg, const CorpusManifest& corpus);

  VAELossReport step();
  void run(const MotionCallback& cb = nullptr);
  void save(const std::string& path) const;
  void resume_from(const std::string& path);

  MotionModel& model() { return *model_; }
  int64_t current_step() const { return step_; }

 private:
  struct Clip {
    Tensor mel;            // [T, n_mels]
    PitchContour pitch;
    Tensor landmarks;      // [T, 204], normalized
  };
  const Clip& clip(size_t idx);

  PipelineConfig cfg_;
  CorpusManifest corpus_;
  std::vector<std::optional<Clip>> clips_;
  std::unique_ptr<MotionModel> model_;
  nn::Adam adam_;
  int64_t step_ = 0;
  bool norm_fitted_ = false;
};

}  // namespace adatta
