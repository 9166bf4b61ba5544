#include "pllm/model.h"

#include <algorithm>
#include <cmath>

#include "core/errors.h"

namespace adatta {

namespace {
constexpr int64_t kMaxSeq = 512;
constexpr uint64_t kStepSalt = 0x9c3a11b7ULL;

enum Segment : int64_t {
  kSegPromptContent = 0,
  kSegPromptCodes = 1,
  kSegSeparator = 2,
  kSegTargetContent = 3,
  kSegTargetCodes = 4,
};
}  // namespace

int64_t pllm_max_sequence() { return kMaxSeq; }

PllmModel::PllmModel(const PllmConfig& cfg, int64_t d_content,
                     int64_t codebook_size, uint64_t init_seed)
    : cfg_(cfg), d_content_(d_content), k_(codebook_size) {
  Rng rng(mix_seed(init_seed, 0x11a3u));
  const int64_t w = cfg.width;
  adapter_ = nn::Dense(params_, "adapter", d_content, w, rng);
  code_emb_ = nn::Embedding(params_, "codes", codebook_size, w, rng);
  sep_ = params_.param("sep", {1, w}, 0.02, rng);
  segments_ = params_.param("segments", {5, w}, 0.02, rng);
  positions_ = params_.param("positions", {kMaxSeq, w}, 0.02, rng);
  for (int64_t i = 0; i < cfg.layers; ++i)
    blocks_.emplace_back(params_, "block" + std::to_string(i), w, cfg.heads, rng);
  final_ln_ = nn::LayerNorm(params_, "final_ln", w);
  head_ = nn::Dense(params_, "head", w, codebook_size, rng);
}

void PllmModel::validate_input(const PllmInput& input,
                               const std::vector<int64_t>& prefix) const {
  if (input.prompt_content.rows() !=
      static_cast<int64_t>(input.prompt_codes.size()))
    throw InvalidInput("pllm: prompt codes length != prompt content length");
  if (input.prompt_content.cols() != d_content_ ||
      input.target_content.cols() != d_content_)
    throw InvalidInput("pllm: content width mismatch");
  if (input.target_content.rows() < 1)
    throw InvalidInput("pllm: empty target content");
  for (int64_t c : input.prompt_codes)
    if (c < 0 || c >= k_) throw InvalidInput("pllm: prompt code out of range");
  for (int64_t c : prefix)
    if (c < 0 || c >= k_) throw InvalidInput("pllm: target code out of range");
  if (static_cast<int64_t>(prefix.size()) > input.target_content.rows())
    throw InvalidInput("pllm: target prefix longer than target content");
}

ag::Var PllmModel::forward_logits_var(
    const PllmInput& input, const std::vector<int64_t>& target_prefix) const {
  validate_input(input, target_prefix);
  const int64_t lp = input.prompt_content.rows();
  const int64_t lt = input.target_content.rows();
  const int64_t p = static_cast<int64_t>(target_prefix.size());
  const int64_t n = 2 * lp + 1 + lt + p;
  if (n > kMaxSeq)
    throw InvalidInput("pllm: packed sequence exceeds max length " +
                       std::to_string(kMaxSeq));

  std::vector<ag::Var> pieces;
  pieces.push_back(adapter_.forward(ag::Var::constant(input.prompt_content)));
  pieces.push_back(code_emb_.forward(input.prompt_codes));
  pieces.push_back(sep_);
  pieces.push_back(adapter_.forward(ag::Var::constant(input.target_content)));
  if (p > 0) pieces.push_back(code_emb_.forward(target_prefix));
  ag::Var h = ag::concat_rows(pieces);

  std::vector<int64_t> seg_ids;
  seg_ids.reserve(static_cast<size_t>(n));
  for (int64_t i = 0; i < lp; ++i) seg_ids.push_back(kSegPromptContent);
  for (int64_t i = 0; i < lp; ++i) seg_ids.push_back(kSegPromptCodes);
  seg_ids.push_back(kSegSeparator);
  for (int64_t i = 0; i < lt; ++i) seg_ids.push_back(kSegTargetContent);
  for (int64_t i = 0; i < p; ++i) seg_ids.push_back(kSegTargetCodes);
  h = ag::add(h, ag::gather_rows(segments_, seg_ids));

  std::vector<int64_t> pos_ids(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) pos_ids[static_cast<size_t>(i)] = i;
  h = ag::add(h, ag::gather_rows(positions_, pos_ids));

  for (const auto& blk : blocks_) h = blk.forward(h);
  h = final_ln_.forward(h);

  // row predicting target code 0 is the last target-content position; code
  // t >= 1 is predicted at the position holding target code t-1
  const int64_t base = 2 * lp + 1 + lt;
  ag::Var picked = ag::slice_rows(h, base - 1, base + p);
  return head_.forward(picked);  // [p + 1, K]
}

Tensor PllmModel::forward_logits(const PllmInput& input,
                                 const std::vector<int64_t>& target_prefix) const {
  return forward_logits_var(input, target_prefix).value();
}

std::vector<int64_t> PllmModel::predict(const PllmInput& input,
                                        int64_t target_length,
                                        const SamplingConfig& sampling,
                                        uint64_t seed) const {
  if (target_length < 1)
    throw InvalidInput("pllm predict: target_length must be >= 1");
  if (target_length > input.target_content.rows())
    throw InvalidInput(
        "pllm predict: target_length exceeds target content length (codes "
        "are phoneme-rate, one per content position)");
  const bool greedy = sampling.temperature <= 0.0 || sampling.top_k == 1;
  Rng rng(mix_seed(seed, 0xdec0deULL));
  std::vector<int64_t> out;
  out.reserve(static_cast<size_t>(target_length));
  for (int64_t t = 0; t < target_length; ++t) {
    const Tensor logits = forward_logits(input, out);
    const int64_t last = logits.rows() - 1;
    std::vector<double> row(static_cast<size_t>(k_));
    for (int64_t j = 0; j < k_; ++j) row[static_cast<size_t>(j)] = logits.at(last, j);
    if (greedy) {
      out.push_back(nn::argmax(row.data(), k_));
      continue;
    }
    for (auto& v : row) v /= sampling.temperature;
    if (sampling.top_k > 0 && sampling.top_k < k_) {
      std::vector<double> sorted = row;
      std::nth_element(sorted.begin(),
                       sorted.begin() + static_cast<size_t>(sampling.top_k - 1),
                       sorted.end(), std::greater<double>());
      const double cutoff = sorted[static_cast<size_t>(sampling.top_k - 1)];
      for (auto& v : row)
        if (v < cutoff) v = -1e300;
    }
    const std::vector<double> probs = nn::softmax(row);
    double u = rng.uniform();
    int64_t pick = k_ - 1;
    double cum = 0.0;
    for (int64_t j = 0; j < k_; ++j) {
      cum += probs[static_cast<size_t>(j)];
      if (u < cum) {
        pick = j;
        break;
      }
    }
    out.push_back(pick);
  }
  return out;
}

void PllmModel::save_state(Checkpoint& ckpt) const {
  for (const auto& [name, node] : params_.all())
    ckpt.tensors["pllm." + name] = node->value;
}

void PllmModel::load_state(const Checkpoint& ckpt) {
  for (const auto& [name, node] : params_.all()) {
    const Tensor& t = ckpt.get("pllm." + name);
    if (!t.same_shape(node->value))
      throw InvalidInput("checkpoint tensor shape mismatch: pllm." + name);
    node->value = t;
  }
}

std::vector<PllmExample> build_pllm_examples(const CorpusManifest& corpus,
                                             const TtsModel& tts,
                                             FeatureCache& features,
                                             bool strict) {
  // deterministic prompt pairing: next usable utterance of the same speaker
  // in manifest order; single-utterance speakers prompt with their first half
  std::vector<PllmExample> out;
  auto usable = [&](size_t idx) -> const UtteranceFeatures* {
    try {
      return &features.get(idx);
    } catch (const Error&) {
      if (strict) throw;
      return nullptr;  // skip-with-log
    }
  };
  for (size_t i = 0; i < corpus.size(); ++i) {
    const UtteranceFeatures* uf = usable(i);
    if (!uf) continue;
    const ContentRepr content = tts.encode_text(uf->phonemes);
    const ProsodyEncoding enc = tts.encode_prosody(uf->bands, uf->align);

    const std::vector<size_t> peers = corpus.utterances_of(uf->speaker);
    PllmExample ex;
    ex.input.target_content = content;
    ex.target_codes = enc.codes;
    const UtteranceFeatures* pf = nullptr;
    if (peers.size() > 1) {
      size_t at = 0;
      while (peers[at] != i) ++at;
      for (size_t j = 1; j < peers.size() && !pf; ++j)
        pf = usable(peers[(at + j) % peers.size()]);
    }
    if (pf) {
      ex.input.prompt_content = tts.encode_text(pf->phonemes);
      ex.input.prompt_codes = tts.encode_prosody(pf->bands, pf->align).codes;
    } else {
      const int64_t half = std::max<int64_t>(1, content.rows() / 2);
      Tensor pc({half, content.cols()});
      for (int64_t r = 0; r < half; ++r)
        for (int64_t c = 0; c < content.cols(); ++c)
          pc.at(r, c) = content.at(r, c);
      ex.input.prompt_content = std::move(pc);
      ex.input.prompt_codes.assign(enc.codes.begin(), enc.codes.begin() + half);
    }
    out.push_back(std::move(ex));
  }
  if (out.empty()) throw InvalidInput("train-pllm: no usable corpus records");
  return out;
}

PllmTrainer::PllmTrainer(const PipelineConfig& cfg,
                         std::vector<PllmExample> examples)
    : cfg_(cfg),
      examples_(std::move(examples)),
      model_(std::make_unique<PllmModel>(cfg.pllm, cfg.tts.d_model,
                                         cfg.tts.codebook_size,
                                         cfg.pllm.train.seed)),
      adam_(cfg.pllm.train.lr) {
  if (examples_.empty()) throw InvalidInput("train-pllm: empty example set");
  if (cfg.pllm.train.batch_size < 1)
    throw InvalidInput("train-pllm: empty batch");
}

double PllmTrainer::step() {
  const TrainConfig& tc = cfg_.pllm.train;
  Rng rng(mix_seed(tc.seed, kStepSalt, static_cast<uint64_t>(step_)));
  ag::Var loss;
  for (int b = 0; b < tc.batch_size; ++b) {
    const PllmExample& ex = examples_[static_cast<size_t>(
        rng.uniform_int(static_cast<int64_t>(examples_.size())))];
    std::vector<int64_t> prefix(ex.target_codes.begin(),
                                ex.target_codes.end() - 1);
    ag::Var logits = model_->forward_logits_var(ex.input, prefix);
    ag::Var ce = ag::softmax_cross_entropy(logits, ex.target_codes);
    loss = b == 0 ? ce : ag::add(loss, ce);
  }
  loss = ag::mul_scalar(loss, 1.0 / static_cast<double>(tc.batch_size));
  model_->params().zero_grads();
  ag::backward(loss);
  adam_.step(model_->params());
  const double value = loss.value().at(0);
  if (!std::isfinite(value))
    throw DivergedError("train-pllm: non-finite loss at step " +
                        std::to_string(step_));
  ++step_;
  return value;
}

void PllmTrainer::run(const PllmCallback& cb) {
  while (step_ < cfg_.pllm.train.max_steps) {
    const double ce = step();
    if (cb) cb(step_, ce);
  }
}

void PllmTrainer::save(const std::string& path) const {
  Checkpoint ckpt;
  ckpt.kind = "pllm";
  ckpt.config_hash = config_hash(cfg_, "pllm");
  ckpt.step = static_cast<uint64_t>(step_);
  model_->save_state(ckpt);
  save_adam_state(ckpt, "adam", adam_);
  save_checkpoint(path, ckpt);
}

void PllmTrainer::resume_from(const std::string& path) {
  Checkpoint ckpt = load_checkpoint(path, "pllm", config_hash(cfg_, "pllm"));
  model_->load_state(ckpt);
  load_adam_state(ckpt, "adam", adam_);
  step_ = static_cast<int64_t>(ckpt.step);
}

}  // namespace adatta
