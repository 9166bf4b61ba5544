#include "tts/train.h"

#include <algorithm>
#include <cmath>

#include "core/errors.h"
#include "core/serialize.h"

namespace adatta {

namespace {
constexpr double kEmaDecay = 0.99;
constexpr uint64_t kStepSalt = 0x5157a9e0ULL;
}  // namespace

std::pair<double, double> lsgan_losses(const std::vector<double>& d_real,
                                       const std::vector<double>& d_fake) {
  if (d_real.empty() || d_fake.empty())
    throw InvalidInput("lsgan_losses: empty discriminator outputs");
  double real_term = 0.0, fake_term = 0.0, g_term = 0.0;
  for (double v : d_real) {
    if (!std::isfinite(v)) throw InvalidInput("lsgan_losses: non-finite input");
    real_term += (v - 1.0) * (v - 1.0);
  }
  for (double v : d_fake) {
    if (!std::isfinite(v)) throw InvalidInput("lsgan_losses: non-finite input");
    fake_term += v * v;
    g_term += (v - 1.0) * (v - 1.0);
  }
  const double d_loss = 0.5 * real_term / static_cast<double>(d_real.size()) +
                        0.5 * fake_term / static_cast<double>(d_fake.size());
  const double g_loss = g_term / static_cast<double>(d_fake.size());
  return {d_loss, g_loss};
}

Stage1LossReport stage1_loss(const Tensor& y, const Tensor& y_hat,
                             double vq_loss, double adv_g_loss) {
  if (!y.same_shape(y_hat))
    throw InvalidInput("stage1_loss: mel shape mismatch " + y.shape_str() +
                       " vs " + y_hat.shape_str());
  double acc = 0.0;
  for (int64_t i = 0; i < y.numel(); ++i) {
    const double d = y.at(i) - y_hat.at(i);
    acc += d * d;
  }
  Stage1LossReport rep;
  rep.recon_l2 = acc / static_cast<double>(y.numel());
  rep.vq_loss = vq_loss;
  rep.adv_g_loss = adv_g_loss;
  rep.total = rep.recon_l2 + rep.vq_loss + rep.adv_g_loss;
  return rep;
}

FeatureCache::FeatureCache(const CorpusManifest& corpus,
                           const FeatureConfig& cfg)
    : corpus_(&corpus), cfg_(cfg), cache_(corpus.size()) {}

const UtteranceFeatures& FeatureCache::get(size_t idx) {
  if (!cache_[idx]) {
    const UtteranceRecord& rec = corpus_->at(idx);
    UtteranceFeatures uf;
    uf.mel = compute_mel(read_wav(rec.audio_path), cfg_);
    uf.bands = slice_prosody_bands(uf.mel);
    uf.align = align_frames_to_phonemes(uf.mel.frames(), rec.durations,
                                        cfg_.align_tolerance);
    uf.phonemes = rec.phoneme_ids;
    uf.speaker = rec.speaker_id;
    cache_[idx] = std::move(uf);
  }
  return *cache_[idx];
}

Stage1Trainer::Stage1Trainer(const PipelineConfig& cfg,
                             const CorpusManifest& corpus)
    : cfg_(cfg),
      corpus_(corpus),
      cache_(corpus_, cfg.features),
      model_(std::make_unique<TtsModel>(cfg.tts, cfg.features.n_mels,
                                        cfg.tts.train.seed)),
      adam_gen_(cfg.tts.train.lr),
      adam_disc_(cfg.tts.train.lr) {
  if (corpus_.records.empty()) throw InvalidInput("train: empty corpus");
  if (cfg.tts.train.batch_size < 1) throw InvalidInput("train: empty batch");
  cfg_.validate();
}

size_t Stage1Trainer::pick_utterance(Rng& rng) {
  const size_t n = corpus_.size();
  size_t idx = static_cast<size_t>(rng.uniform_int(static_cast<int64_t>(n)));
  for (size_t tries = 0; tries < n; ++tries) {
    try {
      cache_.get(idx);
      return idx;
    } catch (const Error& e) {
      if (cfg_.tts.train.strict) throw;
      idx = (idx + 1) % n;  // skip-with-log
    }
  }
  throw InvalidInput("train: no usable utterance in corpus");
}

Tensor Stage1Trainer::pick_reference_mel(size_t target_idx, Rng& rng) {
  const std::string& speaker = corpus_.at(target_idx).speaker_id;
  std::vector<size_t> peers = corpus_.utterances_of(speaker);
  peers.erase(std::remove(peers.begin(), peers.end(), target_idx), peers.end());
  size_t offset =
      peers.empty() ? 0
                    : static_cast<size_t>(
                          rng.uniform_int(static_cast<int64_t>(peers.size())));
  for (size_t tries = 0; tries < peers.size(); ++tries) {
    const size_t pick = peers[(offset + tries) % peers.size()];
    try {
      return cache_.get(pick).mel.values;
    } catch (const Error&) {
      if (cfg_.tts.train.strict) throw;
    }
  }
  // single-utterance speaker: disjoint half crop of the target utterance
  const Tensor& mel = cache_.get(target_idx).mel.values;
  const int64_t t = mel.rows();
  if (t < 2) return mel;
  const int64_t half = t / 2;
  const bool first = rng.uniform_int(2) == 0;
  const int64_t from = first ? 0 : half;
  const int64_t to = first ? half : t;
  Tensor crop({to - from, mel.cols()});
  for (int64_t r = from; r < to; ++r)
    for (int64_t c = 0; c < mel.cols(); ++c) crop.at(r - from, c) = mel.at(r, c);
  return crop;
}

Stage1LossReport Stage1Trainer::step() {
  const TrainConfig& tc = cfg_.tts.train;
  Rng rng(mix_seed(tc.seed, kStepSalt, static_cast<uint64_t>(step_)));
  const bool adv_on = tc.lambda_adv > 0.0 && step_ >= tc.adv_warmup_steps;

  std::vector<ag::Var> batch_losses;
  std::vector<std::vector<double>> batch_vectors;
  std::vector<int64_t> batch_assignments;
  // detached fake/real windows reused for the discriminator step
  std::vector<Tensor> fake_windows, real_windows;
  double recon_acc = 0.0, vq_acc = 0.0, adv_g_acc = 0.0;

  for (int b = 0; b < tc.batch_size; ++b) {
    const size_t idx = pick_utterance(rng);
    const UtteranceFeatures& uf = cache_.get(idx);
    const Tensor ref_mel = pick_reference_mel(idx, rng);

    ag::Var content = model_->encode_text_var(uf.phonemes);
    ag::Var timbre = model_->encode_timbre_var(ref_mel);
    ag::Var pre_quant = model_->prosody_prequant_var(uf.bands.values, uf.align);
    auto [codes, quantized] = model_->quantize_rows(pre_quant, /*st=*/true);
    ag::Var y_hat =
        model_->decode_mel_var(content, timbre, quantized, uf.align);

    const Tensor& y = uf.mel.values;
    ag::Var recon = ag::mse(y_hat, ag::Var::constant(y));
    ag::Var commit = ag::mul_scalar(
        ag::mse(pre_quant, ag::Var::constant(quantized.value())),
        tc.beta_commit);
    ag::Var item_loss = ag::add(recon, commit);

    double adv_g_item = 0.0;
    if (adv_on) {
      const int64_t t = y_hat.rows();
      const int64_t w = std::min<int64_t>(cfg_.tts.disc_window, t);
      const int64_t start = t > w ? rng.uniform_int(t - w + 1) : 0;
      ag::Var fake_win;
      if (cfg_.tts.adv_updates_timbre) {
        fake_win = ag::slice_rows(y_hat, start, start + w);
      } else {
        // adversarial gradient bypasses the timbre encoder
        ag::Var y_hat_adv = model_->decode_mel_var(content, ag::detach(timbre),
                                                   quantized, uf.align);
        fake_win = ag::slice_rows(y_hat_adv, start, start + w);
      }
      ag::Var d_fake = model_->discriminate_var(fake_win);
      ag::Var ones = ag::Var::constant(Tensor::full({1, 1}, 1.0));
      ag::Var g_raw = ag::mse(d_fake, ones);
      ag::Var g_weighted = ag::mul_scalar(g_raw, tc.lambda_adv);
      item_loss = ag::add(item_loss, g_weighted);
      adv_g_item = g_weighted.value().at(0);

      // stash detached windows for the discriminator update
      Tensor fake_copy({w, y.cols()});
      for (int64_t r = 0; r < w; ++r)
        for (int64_t c = 0; c < y.cols(); ++c)
          fake_copy.at(r, c) = y_hat.value().at(start + r, c);
      fake_windows.push_back(std::move(fake_copy));
      const int64_t rt = y.rows();
      const int64_t rw = std::min<int64_t>(cfg_.tts.disc_window, rt);
      const int64_t rstart = rt > rw ? rng.uniform_int(rt - rw + 1) : 0;
      Tensor real_copy({rw, y.cols()});
      for (int64_t r = 0; r < rw; ++r)
        for (int64_t c = 0; c < y.cols(); ++c)
          real_copy.at(r, c) = y.at(rstart + r, c);
      real_windows.push_back(std::move(real_copy));
    }

    batch_losses.push_back(item_loss);
    recon_acc += recon.value().at(0);
    vq_acc += commit.value().at(0);
    adv_g_acc += adv_g_item;
    const Tensor& pq = pre_quant.value();
    for (int64_t p = 0; p < pq.rows(); ++p) {
      std::vector<double> row(static_cast<size_t>(pq.cols()));
      for (int64_t c = 0; c < pq.cols(); ++c)
        row[static_cast<size_t>(c)] = pq.at(p, c);
      batch_vectors.push_back(std::move(row));
      batch_assignments.push_back(codes[static_cast<size_t>(p)]);
    }
  }

  ag::Var total = batch_losses[0];
  for (size_t i = 1; i < batch_losses.size(); ++i)
    total = ag::add(total, batch_losses[i]);
  total = ag::mul_scalar(total, 1.0 / static_cast<double>(tc.batch_size));

  model_->gen_params().zero_grads();
  model_->disc_params().zero_grads();
  ag::backward(total);
  adam_gen_.step(model_->gen_params());

  model_->codebook().ema_update(batch_vectors, batch_assignments, kEmaDecay);
  model_->codebook().reset_dead_entries(tc.reset_patience, batch_vectors, rng);

  double adv_d_acc = 0.0;
  if (adv_on) {
    ag::Var d_loss;
    for (size_t i = 0; i < fake_windows.size(); ++i) {
      ag::Var d_real =
          model_->discriminate_var(ag::Var::constant(real_windows[i]));
      ag::Var d_fake =
          model_->discriminate_var(ag::Var::constant(fake_windows[i]));
      ag::Var ones = ag::Var::constant(Tensor::full({1, 1}, 1.0));
      ag::Var item =
          ag::add(ag::mul_scalar(ag::mse(d_real, ones), 0.5),
                  ag::mul_scalar(ag::mean_all(ag::square(d_fake)), 0.5));
      d_loss = i == 0 ? item : ag::add(d_loss, item);
    }
    d_loss = ag::mul_scalar(d_loss, 1.0 / static_cast<double>(fake_windows.size()));
    adv_d_acc = d_loss.value().at(0);
    model_->disc_params().zero_grads();
    ag::backward(d_loss);
    adam_disc_.step(model_->disc_params());
  }

  const double inv_b = 1.0 / static_cast<double>(tc.batch_size);
  Stage1LossReport rep;
  rep.recon_l2 = recon_acc * inv_b;
  rep.vq_loss = vq_acc * inv_b;
  rep.adv_g_loss = adv_g_acc * inv_b;
  rep.adv_d_loss = adv_d_acc;
  rep.total = rep.recon_l2 + rep.vq_loss + rep.adv_g_loss;
  if (!std::isfinite(rep.total) || !std::isfinite(rep.adv_d_loss)) {
    throw DivergedError("train-tts: non-finite loss at step " +
                        std::to_string(step_));
  }
  ++step_;
  return rep;
}

void Stage1Trainer::run(const Stage1Callback& cb) {
  while (step_ < cfg_.tts.train.max_steps) {
    Stage1LossReport rep = step();
    if (cb) cb(step_, rep);
  }
}

void Stage1Trainer::save(const std::string& checkpoint_path) const {
  Checkpoint ckpt;
  ckpt.kind = "tts";
  ckpt.config_hash = config_hash(cfg_, "tts");
  ckpt.step = static_cast<uint64_t>(step_);
  model_->save_state(ckpt);
  save_adam_state(ckpt, "adam_g", adam_gen_);
  save_adam_state(ckpt, "adam_d", adam_disc_);
  save_checkpoint(checkpoint_path, ckpt);
}

void Stage1Trainer::resume_from(const std::string& checkpoint_path) {
  Checkpoint ckpt =
      load_checkpoint(checkpoint_path, "tts", config_hash(cfg_, "tts"));
  model_->load_state(ckpt);
  load_adam_state(ckpt, "adam_g", adam_gen_);
  load_adam_state(ckpt, "adam_d", adam_disc_);
  step_ = static_cast<int64_t>(ckpt.step);
}

}  // namespace adatta
