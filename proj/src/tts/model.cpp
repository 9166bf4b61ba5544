#include "tts/model.h"

#include <cmath>
#include <string>

#include "core/errors.h"

namespace adatta {

namespace {

// pooling matrix [L, T]: row p holds 1/dur_p over its span
Tensor pooling_matrix(const FrameToPhonemeMap& align) {
  const int64_t l = align.num_phonemes();
  const int64_t t = align.num_frames();
  Tensor pool({l, t});
  int64_t frame = 0;
  for (int64_t p = 0; p < l; ++p) {
    const int64_t dur = align.durations[static_cast<size_t>(p)];
    for (int64_t i = 0; i < dur; ++i, ++frame)
      pool.at(p, frame) = 1.0 / static_cast<double>(dur);
  }
  return pool;
}

}  // namespace

Tensor temporal_mean(const Tensor& frames) {
  if (frames.ndim() != 2 || frames.rows() == 0)
    throw InvalidInput("temporal_mean: need a non-empty [T, d] matrix");
  Tensor out({1, frames.cols()});
  for (int64_t t = 0; t < frames.rows(); ++t)
    for (int64_t c = 0; c < frames.cols(); ++c) out.at(0, c) += frames.at(t, c);
  for (int64_t c = 0; c < frames.cols(); ++c)
    out.at(0, c) /= static_cast<double>(frames.rows());
  return out;
}

ag::Var upsample_by_durations(const ag::Var& phoneme_rows,
                              const FrameToPhonemeMap& align) {
  if (phoneme_rows.rows() != align.num_phonemes())
    throw InvalidInput("upsample: phoneme count mismatch");
  return ag::gather_rows(phoneme_rows, align.assignment);
}

ag::Var downsample_by_durations(const ag::Var& frame_rows,
                                const FrameToPhonemeMap& align) {
  if (frame_rows.rows() != align.num_frames())
    throw InvalidInput("downsample: frame count mismatch");
  return ag::matmul(ag::Var::constant(pooling_matrix(align)), frame_rows);
}

TtsModel::TtsModel(const TtsConfig& cfg, int n_mels, uint64_t init_seed)
    : cfg_(cfg), n_mels_(n_mels) {
  Rng rng(mix_seed(init_seed, 0x7757u));
  const int64_t d = cfg.d_model;
  const int64_t k = cfg.conv_kernel;

  phoneme_emb_ = nn::Embedding(gen_params_, "text.emb", cfg.phoneme_vocab, d, rng);
  for (int64_t i = 0; i < cfg.encoder_blocks; ++i)
    text_blocks_.emplace_back(gen_params_, "text.block" + std::to_string(i), d, k, rng);

  timbre_in_ = nn::Dense(gen_params_, "timbre.in", n_mels, cfg.d_timbre, rng);
  for (int64_t i = 0; i < cfg.encoder_blocks; ++i)
    timbre_blocks_.emplace_back(gen_params_, "timbre.block" + std::to_string(i),
                                cfg.d_timbre, k, rng);

  prosody_in_ = nn::Dense(gen_params_, "prosody.in", kProsodyBins, cfg.d_code, rng);
  for (int64_t i = 0; i < cfg.encoder_blocks; ++i)
    prosody_blocks_.emplace_back(gen_params_,
                                 "prosody.block" + std::to_string(i),
                                 cfg.d_code, k, rng);
  prosody_out_ = nn::Dense(gen_params_, "prosody.out", cfg.d_code, cfg.d_code, rng);

  dec_code_proj_ = nn::Dense(gen_params_, "dec.code_proj", cfg.d_code, d, rng);
  dec_timbre_proj_ = nn::Dense(gen_params_, "dec.timbre_proj", cfg.d_timbre, d, rng);
  dec_pos_proj_ = nn::Dense(gen_params_, "dec.pos_proj", 1, d, rng);
  for (int64_t i = 0; i < cfg.decoder_blocks; ++i)
    dec_blocks_.emplace_back(gen_params_, "dec.block" + std::to_string(i), d, k, rng);
  dec_out_ = nn::Dense(gen_params_, "dec.out", d, n_mels, rng);

  disc_in_ = nn::Dense(disc_params_, "disc.in", n_mels, cfg.disc_hidden, rng);
  for (int i = 0; i < 2; ++i)
    disc_convs_.emplace_back(disc_params_, "disc.conv" + std::to_string(i),
                             cfg.disc_hidden, cfg.disc_hidden, 3, rng);
  disc_out_ = nn::Dense(disc_params_, "disc.out", cfg.disc_hidden, 1, rng);

  codebook_ = std::make_unique<Codebook>(cfg.codebook_size, cfg.d_code, 0.5, rng);
}

ag::Var TtsModel::encode_text_var(const std::vector<int64_t>& phonemes) const {
  if (phonemes.empty()) throw InvalidInput("encode_text: empty sequence");
  for (int64_t id : phonemes) {
    if (id < 0 || id >= cfg_.phoneme_vocab)
      throw InvalidInput("encode_text: phoneme id " + std::to_string(id) +
                         " outside vocabulary of " +
                         std::to_string(cfg_.phoneme_vocab));
  }
  ag::Var h = phoneme_emb_.forward(phonemes);
  for (const auto& blk : text_blocks_) h = blk.forward(h);
  return h;
}

ContentRepr TtsModel::encode_text(const std::vector<int64_t>& phonemes) const {
  return encode_text_var(phonemes).value();
}

ag::Var TtsModel::encode_timbre_var(const Tensor& ref_mel) const {
  if (ref_mel.ndim() != 2 || ref_mel.rows() == 0)
    throw InvalidInput("encode_timbre: empty reference mel");
  if (ref_mel.cols() != n_mels_)
    throw InvalidInput("encode_timbre: reference mel has wrong band count");
  ag::Var h = timbre_in_.forward(ag::Var::constant(ref_mel));
  for (const auto& blk : timbre_blocks_) h = blk.forward(h);
  // temporal average pooling: a [1, T] constant row of 1/T
  Tensor pool({1, h.rows()});
  pool.fill(1.0 / static_cast<double>(h.rows()));
  return ag::matmul(ag::Var::constant(pool), h);
}

TimbreVector TtsModel::encode_timbre(const MelSpectrogram& ref_mel) const {
  return encode_timbre_var(ref_mel.values).value();
}

ag::Var TtsModel::prosody_prequant_var(const Tensor& bands,
                                       const FrameToPhonemeMap& align) const {
  if (bands.cols() != kProsodyBins)
    throw InvalidInput("encode_prosody: expected 20 prosody bands");
  if (bands.rows() != align.num_frames())
    throw InvalidInput("encode_prosody: band frames " +
                       std::to_string(bands.rows()) + " != alignment frames " +
                       std::to_string(align.num_frames()));
  ag::Var h = prosody_in_.forward(ag::Var::constant(bands));
  for (const auto& blk : prosody_blocks_) h = blk.forward(h);
  h = downsample_by_durations(h, align);
  return prosody_out_.forward(h);
}

std::pair<std::vector<int64_t>, ag::Var> TtsModel::quantize_rows(
    const ag::Var& pre_quant, bool st) const {
  const Tensor& pq = pre_quant.value();
  const int64_t l = pq.rows(), d = pq.cols();
  Tensor quantized({l, d});
  std::vector<int64_t> codes(static_cast<size_t>(l));
  for (int64_t p = 0; p < l; ++p) {
    const QuantizeResult qr = codebook_->quantize(pq.data() + p * d);
    codes[static_cast<size_t>(p)] = qr.index;
    for (int64_t c = 0; c < d; ++c) quantized.at(p, c) = qr.vector[static_cast<size_t>(c)];
  }
  ag::Var qv = st ? ag::straight_through(pre_quant, std::move(quantized))
                  : ag::Var::constant(std::move(quantized));
  return {std::move(codes), qv};
}

ProsodyEncoding TtsModel::encode_prosody(const ProsodyBands& bands,
                                         const FrameToPhonemeMap& align) const {
  ag::Var pq = prosody_prequant_var(bands.values, align);
  auto [codes, qv] = quantize_rows(pq, /*st=*/false);
  ProsodyEncoding enc;
  enc.codes = std::move(codes);
  enc.pre_quant = pq.value();
  return enc;
}

ag::Var TtsModel::decode_mel_var(const ag::Var& content, const ag::Var& timbre,
                                 const ag::Var& prosody_phoneme_rate,
                                 const FrameToPhonemeMap& align) const {
  if (content.rows() != align.num_phonemes())
    throw InvalidInput("decode_mel: content length " +
                       std::to_string(content.rows()) +
                       " != phoneme count " +
                       std::to_string(align.num_phonemes()));
  if (prosody_phoneme_rate.rows() != content.rows())
    throw InvalidInput("decode_mel: prosody length != content length");
  const int64_t t = align.num_frames();
  ag::Var h = upsample_by_durations(content, align);
  ag::Var code_up =
      dec_code_proj_.forward(upsample_by_durations(prosody_phoneme_rate, align));
  h = ag::add(h, code_up);
  // broadcast-add of the global timbre vector to every frame
  h = ag::add_rowvec(h, dec_timbre_proj_.forward(timbre));
  // fractional position inside each phoneme span, so the decoder can shape
  // frames within a span despite piecewise-constant inputs
  Tensor pos({t, 1});
  {
    int64_t frame = 0;
    for (int64_t p = 0; p < align.num_phonemes(); ++p) {
      const int64_t dur = align.durations[static_cast<size_t>(p)];
      for (int64_t i = 0; i < dur; ++i, ++frame)
        pos.at(frame, 0) = (static_cast<double>(i) + 0.5) / static_cast<double>(dur);
    }
  }
  h = ag::add(h, dec_pos_proj_.forward(ag::Var::constant(pos)));
  for (const auto& blk : dec_blocks_) h = blk.forward(h);
  return dec_out_.forward(h);
}

MelSpectrogram TtsModel::decode_mel(const ContentRepr& content,
                                    const TimbreVector& timbre,
                                    const std::vector<int64_t>& codes,
                                    const FrameToPhonemeMap& align,
                                    const FeatureConfig& feat_cfg) const {
  if (static_cast<int64_t>(codes.size()) != content.rows())
    throw InvalidInput("decode_mel: code count != content length");
  Tensor q({static_cast<int64_t>(codes.size()), cfg_.d_code});
  for (size_t p = 0; p < codes.size(); ++p) {
    if (codes[p] < 0 || codes[p] >= codebook_->size())
      throw InvalidInput("decode_mel: code index out of range");
    for (int64_t c = 0; c < cfg_.d_code; ++c)
      q.at(static_cast<int64_t>(p), c) = codebook_->entries().at(codes[p], c);
  }
  ag::Var out = decode_mel_var(ag::Var::constant(content),
                               ag::Var::constant(timbre),
                               ag::Var::constant(q), align);
  MelSpectrogram mel;
  mel.values = out.value();
  mel.hop_length = feat_cfg.hop_length;
  mel.sample_rate = feat_cfg.sample_rate;
  return mel;
}

ag::Var TtsModel::discriminate_var(const ag::Var& mel_window) const {
  ag::Var h = disc_in_.forward(mel_window);
  for (const auto& conv : disc_convs_) h = ag::leaky_relu(conv.forward(h), 0.2);
  Tensor pool({1, h.rows()});
  pool.fill(1.0 / static_cast<double>(h.rows()));
  h = ag::matmul(ag::Var::constant(pool), h);
  return disc_out_.forward(h);  // [1, 1]
}

void TtsModel::save_state(Checkpoint& ckpt) const {
  for (const auto& [name, node] : gen_params_.all())
    ckpt.tensors["gen." + name] = node->value;
  for (const auto& [name, node] : disc_params_.all())
    ckpt.tensors["disc." + name] = node->value;
  ckpt.tensors["vq.entries"] = codebook_->entries();
  ckpt.tensors["vq.ema_count"] = codebook_->ema_count();
  ckpt.tensors["vq.ema_sum"] = codebook_->ema_sum();
  ckpt.tensors["vq.unused"] = codebook_->unused_steps();
}

void TtsModel::load_state(const Checkpoint& ckpt) {
  for (const auto& [name, node] : gen_params_.all()) {
    const Tensor& t = ckpt.get("gen." + name);
    if (!t.same_shape(node->value))
      throw InvalidInput("checkpoint tensor shape mismatch: gen." + name);
    node->value = t;
  }
  for (const auto& [name, node] : disc_params_.all()) {
    const Tensor& t = ckpt.get("disc." + name);
    if (!t.same_shape(node->value))
      throw InvalidInput("checkpoint tensor shape mismatch: disc." + name);
    node->value = t;
  }
  codebook_ = std::make_unique<Codebook>(
      ckpt.get("vq.entries"), ckpt.get("vq.ema_count"), ckpt.get("vq.ema_sum"),
      ckpt.get("vq.unused"));
}

}  // namespace adatta
