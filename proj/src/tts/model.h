#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "audio/features.h"
#include "core/autograd.h"
#include "core/nn.h"
#include "core/serialize.h"
#include "pipeline/config.h"
#include "tts/vq.h"

namespace adatta {

struct PhonemeSequence {
  std::vector<int64_t> ids;
};

// L x d_model content matrix, one row per phoneme
using ContentRepr = Tensor;
// d_timbre global speaker vector (shape [1, d_timbre])
using TimbreVector = Tensor;

struct ProsodyEncoding {
  std::vector<int64_t> codes;  // one per phoneme
  Tensor pre_quant;            // [L, d_code], before quantization
};

// mean over rows; the pooling step of the timbre encoder, exposed so it can
// be asserted in isolation
Tensor temporal_mean(const Tensor& frames);

// Disentangled VQ TTS model: text encoder (content), timbre encoder
// (temporal-average global vector), prosody encoder over the 20 low mel
// bands with phoneme-level downsampling and a VQ bottleneck, and a mel
// decoder that recombines the three streams. A window discriminator
// provides the least-squares adversarial signal during training.
class TtsModel {
 public:
  TtsModel(const TtsConfig& cfg, int n_mels, uint64_t init_seed);

  // ---- eval-mode operations (deterministic, concurrently invocable) ----
  ContentRepr encode_text(const std::vector<int64_t>& phonemes) const;
  TimbreVector encode_timbre(const MelSpectrogram& ref_mel) const;
  ProsodyEncoding encode_prosody(const ProsodyBands& bands,
                                 const FrameToPhonemeMap& align) const;
  MelSpectrogram decode_mel(const ContentRepr& content,
                            const TimbreVector& timbre,
                            const std::vector<int64_t>& codes,
                            const FrameToPhonemeMap& align,
                            const FeatureConfig& feat_cfg) const;

  // ---- graph-building forwards used by the trainer and gradient tests ----
  ag::Var encode_text_var(const std::vector<int64_t>& phonemes) const;
  ag::Var encode_timbre_var(const Tensor& ref_mel) const;
  // frame-rate prosody features pooled to phoneme rate; quantization happens
  // in the caller so the straight-through estimator stays visible
  ag::Var prosody_prequant_var(const Tensor& bands,
                               const FrameToPhonemeMap& align) const;
  ag::Var decode_mel_var(const ag::Var& content, const ag::Var& timbre,
                         const ag::Var& prosody_phoneme_rate,
                         const FrameToPhonemeMap& align) const;
  ag::Var discriminate_var(const ag::Var& mel_window) const;

  // quantize each row of pre_quant against the codebook; straight-through
  // estimator applied when st is true
  std::pair<std::vector<int64_t>, ag::Var> quantize_rows(
      const ag::Var& pre_quant, bool st) const;

  const TtsConfig& cfg() const { return cfg_; }
  int n_mels() const { return n_mels_; }
  Codebook& codebook() { return *codebook_; }
  const Codebook& codebook() const { return *codebook_; }
  nn::ParamRegistry& gen_params() { return gen_params_; }
  nn::ParamRegistry& disc_params() { return disc_params_; }

  void save_state(Checkpoint& ckpt) const;
  void load_state(const Checkpoint& ckpt);

 private:
  TtsConfig cfg_;
  int n_mels_;
  nn::ParamRegistry gen_params_;
  nn::ParamRegistry disc_params_;
  std::unique_ptr<Codebook> codebook_;

  // text encoder
  nn::Embedding phoneme_emb_;
  std::vector<nn::ConvBlock> text_blocks_;
  // timbre encoder
  nn::Dense timbre_in_;
  std::vector<nn::ConvBlock> timbre_blocks_;
  // prosody encoder
  nn::Dense prosody_in_;
  std::vector<nn::ConvBlock> prosody_blocks_;
  nn::Dense prosody_out_;
  // decoder
  nn::Dense dec_code_proj_;
  nn::Dense dec_timbre_proj_;
  nn::Dense dec_pos_proj_;
  std::vector<nn::ConvBlock> dec_blocks_;
  nn::Dense dec_out_;
  // discriminator
  nn::Dense disc_in_;
  std::vector<nn::Conv1d> disc_convs_;
  nn::Dense disc_out_;
};

// expand phoneme-rate rows to frame rate by repeating each row across its
// duration span (the inverse of the averaging downsample)
ag::Var upsample_by_durations(const ag::Var& phoneme_rows,
                              const FrameToPhonemeMap& align);

// averaging downsample: frame-rate rows pooled to one row per phoneme span
ag::Var downsample_by_durations(const ag::Var& frame_rows,
                                const FrameToPhonemeMap& align);

}  // namespace adatta
