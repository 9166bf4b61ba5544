#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "core/nn.h"
#include "pipeline/config.h"
#include "pipeline/manifest.h"
#include "tts/model.h"

namespace adatta {

struct Stage1LossReport {
  double recon_l2 = 0.0;
  double vq_loss = 0.0;
  double adv_g_loss = 0.0;
  double adv_d_loss = 0.0;
  double total = 0.0;
};

// d_loss = 1/2 mean[(d_real - 1)^2] + 1/2 mean[d_fake^2]
// g_loss = mean[(d_fake - 1)^2]
std::pair<double, double> lsgan_losses(const std::vector<double>& d_real,
                                       const std::vector<double>& d_fake);

// generator-side composition: total = recon + vq + adv_g
Stage1LossReport stage1_loss(const Tensor& y, const Tensor& y_hat,
                             double vq_loss, double adv_g_loss);

struct UtteranceFeatures {
  MelSpectrogram mel;
  ProsodyBands bands;
  FrameToPhonemeMap align;
  std::vector<int64_t> phonemes;
  std::string speaker;
};

// Lazily materialized per-utterance feature cache shared by trainers.
class FeatureCache {
 public:
  FeatureCache(const CorpusManifest& corpus, const FeatureConfig& cfg);
  const UtteranceFeatures& get(size_t idx);
  size_t size() const { return corpus_->size(); }
  const CorpusManifest& corpus() const { return *corpus_; }

 private:
  const CorpusManifest* corpus_;
  FeatureConfig cfg_;
  std::vector<std::optional<UtteranceFeatures>> cache_;
};

using Stage1Callback =
    std::function<void(int64_t step, const Stage1LossReport&)>;

// Alternating generator/discriminator training for the stage-1 TTS model.
// All stochastic choices at step s are derived from (seed, s), so a run
// resumed from a checkpoint replays the interrupted run bit-exactly.
class Stage1Trainer {
 public:
  Stage1Trainer(const PipelineConfig& cfg, const CorpusManifest& corpus);

  void resume_from(const std::string& checkpoint_path);
  Stage1LossReport step();
  void run(const Stage1Callback& cb = nullptr);
  void save(const std::string& checkpoint_path) const;

  TtsModel& model() { return *model_; }
  FeatureCache& features() { return cache_; }
  int64_t current_step() const { return step_; }

 private:
  // reference mel: a different utterance of the same speaker, or a half
  // crop when the speaker has a single utterance
  Tensor pick_reference_mel(size_t target_idx, Rng& rng);
  size_t pick_utterance(Rng& rng);

  PipelineConfig cfg_;
  CorpusManifest corpus_;
  FeatureCache cache_;
  std::unique_ptr<TtsModel> model_;
  nn::Adam adam_gen_;
  nn::Adam adam_disc_;
  int64_t step_ = 0;
};

}  // namespace adatta
