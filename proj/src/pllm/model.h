#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "core/autograd.h"
#include "core/nn.h"
#include "core/serialize.h"
#include "pipeline/config.h"
#include "pipeline/manifest.h"
#include "tts/model.h"
#include "tts/train.h"

namespace adatta {

struct PllmInput {
  Tensor prompt_content;             // [Lp, d_model]
  std::vector<int64_t> prompt_codes; // length Lp
  Tensor target_content;             // [Lt, d_model]
};

// Decoder-only causal transformer over prosody codes. The packed sequence is
//   [prompt content] [prompt codes] [sep] [target content] [target codes...]
// with learned segment and position embeddings; content vectors enter
// through a linear adapter. Target length is known at inference (codes are
// phoneme-rate), so there is no end-of-sequence token.
class PllmModel {
 public:
  PllmModel(const PllmConfig& cfg, int64_t d_content, int64_t codebook_size,
            uint64_t init_seed);

  // logits for target positions 0..len(target_prefix), one row per position;
  // row t predicts target code t given codes < t
  Tensor forward_logits(const PllmInput& input,
                        const std::vector<int64_t>& target_prefix) const;
  ag::Var forward_logits_var(const PllmInput& input,
                             const std::vector<int64_t>& target_prefix) const;

  std::vector<int64_t> predict(const PllmInput& input, int64_t target_length,
                               const SamplingConfig& sampling,
                               uint64_t seed) const;

  int64_t codebook_size() const { return k_; }
  int64_t d_content() const { return d_content_; }
  nn::ParamRegistry& params() { return params_; }

  void save_state(Checkpoint& ckpt) const;
  void load_state(const Checkpoint& ckpt);

 private:
  void validate_input(const PllmInput& input,
                      const std::vector<int64_t>& prefix) const;

  PllmConfig cfg_;
  int64_t d_content_ = 0;
  int64_t k_ = 0;
  nn::ParamRegistry params_;
  nn::Dense adapter_;
  nn::Embedding code_emb_;
  ag::Var sep_;       // [1, width]
  ag::Var segments_;  // [5, width]
  ag::Var positions_; // [max_seq, width]
  std::vector<nn::TransformerBlock> blocks_;
  nn::LayerNorm final_ln_;
  nn::Dense head_;
};

struct PllmExample {
  PllmInput input;
  std::vector<int64_t> target_codes;
};

// prompt/target pairing over a corpus: prompt is a different utterance of
// the same speaker; single-utterance speakers prompt with the first half of
// their own code sequence. With strict false, records whose features cannot
// be computed are skipped.
std::vector<PllmExample> build_pllm_examples(const CorpusManifest& corpus,
                                             const TtsModel& tts,
                                             FeatureCache& features,
                                             bool strict = true);

using PllmCallback = std::function<void(int64_t step, double ce_loss)>;

class PllmTrainer {
 public:
  PllmTrainer(const PipelineConfig& cfg, std::vector<PllmExample> examples);

  double step();  // teacher-forced cross-entropy, one optimizer update
  void run(const PllmCallback& cb = nullptr);
  void save(const std::string& path) const;
  void resume_from(const std::string& path);

  PllmModel& model() { return *model_; }
  int64_t current_step() const { return step_; }

 private:
  PipelineConfig cfg_;
  std::vector<PllmExample> examples_;
  std::unique_ptr<PllmModel> model_;
  nn::Adam adam_;
  int64_t step_ = 0;
};

}  // namespace adatta
