#include "motion/model.h"

#include <algorithm>
#include <cmath>

#include "core/errors.h"

namespace adatta {

namespace {
constexpr uint64_t kStepSalt = 0x30715a2cULL;

Tensor pitch_feature_matrix(const PitchContour& pitch) {
  const int64_t t = pitch.frames();
  Tensor feats({t, 2});
  for (int64_t i = 0; i < t; ++i) {
    const bool v = pitch.voiced[static_cast<size_t>(i)];
    feats.at(i, 0) = v ? std::log(pitch.f0[static_cast<size_t>(i)]) : 0.0;
    feats.at(i, 1) = v ? 1.0 : 0.0;
  }
  return feats;
}
}  // namespace

VAELossReport vae_loss(const Tensor& recon_lms, const Tensor& target_lms,
                       const Tensor& posterior_mu,
                       const Tensor& posterior_logvar, double lambda_kl) {
  if (!recon_lms.same_shape(target_lms))
    throw InvalidInput("vae_loss: landmark shape mismatch");
  if (!posterior_mu.same_shape(posterior_logvar))
    throw InvalidInput("vae_loss: posterior shape mismatch");
  double recon = 0.0;
  for (int64_t i = 0; i < recon_lms.numel(); ++i) {
    const double d = recon_lms.at(i) - target_lms.at(i);
    recon += d * d;
  }
  recon /= static_cast<double>(recon_lms.numel());
  double kl = 0.0;
  for (int64_t i = 0; i < posterior_mu.numel(); ++i) {
    const double mu = posterior_mu.at(i);
    const double lv = posterior_logvar.at(i);
    kl += 0.5 * (mu * mu + std::exp(lv) - 1.0 - lv);
  }
  kl /= static_cast<double>(posterior_mu.numel());
  VAELossReport rep;
  rep.recon = recon;
  rep.kl = kl;
  rep.lambda_kl = lambda_kl;
  rep.total = recon + lambda_kl * kl;
  return rep;
}

MotionModel::MotionModel(const MotionConfig& cfg, int n_mels,
                         uint64_t init_seed)
    : cfg_(cfg), n_mels_(n_mels) {
  Rng rng(mix_seed(init_seed, 0x3307u));
  const int64_t h = cfg.hidden;
  const int64_t cond_dim = cfg.d_feat + 2;  // content + (log-f0, voiced)

  feat_in_ = nn::Dense(params_, "feat.in", n_mels, cfg.d_feat, rng);
  feat_blocks_.emplace_back(params_, "feat.block0", cfg.d_feat, 3, rng);

  enc_in_ = nn::Dense(params_, "enc.in", cond_dim + kLandmarkDims, h, rng);
  for (int64_t i = 0; i < cfg.encoder_blocks; ++i)
    enc_blocks_.emplace_back(params_, "enc.block" + std::to_string(i), h, 3, rng);
  enc_out_ = nn::Dense(params_, "enc.out", h, 2 * cfg.d_latent, rng);

  dec_in_ = nn::Dense(params_, "dec.in", cond_dim + cfg.d_latent, h, rng);
  for (int64_t i = 0; i < cfg.decoder_blocks; ++i)
    dec_blocks_.emplace_back(params_, "dec.block" + std::to_string(i), h, 3, rng);
  dec_out_ = nn::Dense(params_, "dec.out", h, kLandmarkDims, rng);

  post_in_ = nn::Dense(params_, "post.in", kLandmarkDims, h, rng);
  post_block_ = nn::ConvBlock(params_, "post.block", h, 3, rng);
  post_out_ = nn::Dense(params_, "post.out", h, kLandmarkDims, rng,
                        /*zero_init=*/true);
}

ag::Var MotionModel::content_features_var(const Tensor& mel) const {
  if (mel.ndim() != 2 || mel.rows() == 0 || mel.cols() != n_mels_)
    throw InvalidInput("motion: bad mel matrix for feature encoder");
  ag::Var h = feat_in_.forward(ag::Var::constant(mel));
  for (const auto& blk : feat_blocks_) h = blk.forward(h);
  return h;
}

AudioFeatureSequence MotionModel::encode_audio_features(
    const Waveform& wave, const FeatureConfig& feat) const {
  if (wave.samples.empty())
    throw InvalidInput("encode_audio_features: empty waveform");
  const MelSpectrogram mel = compute_mel(wave, feat);
  AudioFeatureSequence out;
  out.content_features = content_features_var(mel.values).value();
  out.pitch = extract_pitch(wave, feat);
  return out;
}

ag::Var MotionModel::conditioning_var(const ag::Var& content,
                                      const PitchContour& pitch) const {
  if (content.rows() != pitch.frames())
    throw InvalidInput("motion: content/pitch frame mismatch");
  return ag::concat_cols(content,
                         ag::Var::constant(pitch_feature_matrix(pitch)));
}

std::pair<ag::Var, ag::Var> MotionModel::posterior_var(
    const ag::Var& cond, const Tensor& target_lms) const {
  if (target_lms.rows() != cond.rows())
    throw InvalidInput("motion: landmark/conditioning frame mismatch");
  ag::Var h = enc_in_.forward(
      ag::concat_cols(cond, ag::Var::constant(target_lms)));
  for (const auto& blk : enc_blocks_) h = blk.forward(h);
  ag::Var stats = enc_out_.forward(h);
  ag::Var mu = ag::slice_cols(stats, 0, cfg_.d_latent);
  ag::Var logvar = ag::slice_cols(stats, cfg_.d_latent, 2 * cfg_.d_latent);
  return {mu, logvar};
}

ag::Var MotionModel::decode_var(const ag::Var& cond, const ag::Var& z) const {
  ag::Var h = dec_in_.forward(ag::concat_cols(cond, z));
  for (const auto& blk : dec_blocks_) h = blk.forward(h);
  // bound outputs to the landmark coordinate box
  return ag::mul_scalar(ag::tanh_op(dec_out_.forward(h)), 1.5);
}

ag::Var MotionModel::postnet_var(const ag::Var& lms) const {
  ag::Var h = post_in_.forward(lms);
  h = post_block_.forward(h);
  ag::Var delta = post_out_.forward(h);
  return ag::clamp_op(ag::add(lms, delta), -1.5, 1.5);
}

LandmarkSequence MotionModel::vae_audio_to_motion(
    const AudioFeatureSequence& features, MotionMode mode,
    uint64_t seed) const {
  if (features.frames() < 1)
    throw InvalidInput("vae_audio_to_motion: empty feature sequence");
  if (features.frames() != features.pitch.frames())
    throw InvalidInput("vae_audio_to_motion: feature/pitch length mismatch");
  ag::Var cond = conditioning_var(
      ag::Var::constant(features.content_features), features.pitch);
  Tensor z({features.frames(), cfg_.d_latent});
  if (mode == MotionMode::kSample) {
    Rng rng(mix_seed(seed, 0x9a0bULL));
    for (int64_t i = 0; i < z.numel(); ++i) z.at(i) = rng.normal();
  }
  LandmarkSequence out;
  out.points = decode_var(cond, ag::Var::constant(z)).value();
  return out;
}

LandmarkSequence MotionModel::postnet_refine(const LandmarkSequence& lms) const {
  if (lms.points.cols() != kLandmarkDims)
    throw InvalidInput("postnet_refine: expected [T, 204] landmarks");
  LandmarkSequence out;
  out.points = postnet_var(ag::Var::constant(lms.points)).value();
  return out;
}

void MotionModel::save_state(Checkpoint& ckpt) const {
  for (const auto& [name, node] : params_.all())
    ckpt.tensors["motion." + name] = node->value;
  ckpt.put_scalar("norm.scale", norm_.scale);
  ckpt.tensors["norm.translate"] =
      Tensor({3}, {norm_.translate[0], norm_.translate[1], norm_.translate[2]});
}

void MotionModel::load_state(const Checkpoint& ckpt) {
  for (const auto& [name, node] : params_.all()) {
    const Tensor& t = ckpt.get("motion." + name);
    if (!t.same_shape(node->value))
      throw InvalidInput("checkpoint tensor shape mismatch: motion." + name);
    node->value = t;
  }
  norm_.scale = ckpt.scalar("norm.scale");
  const Tensor& tr = ckpt.get("norm.translate");
  for (int64_t a = 0; a < 3; ++a) norm_.translate[a] = tr.at(a);
}

MotionTrainer::MotionTrainer(const PipelineConfig& cfg,
                             const CorpusManifest& corpus)
    : cfg_(cfg),
      corpus_(corpus),
      clips_(corpus.size()),
      model_(std::make_unique<MotionModel>(cfg.motion, cfg.features.n_mels,
                                           cfg.motion.train.seed)),
      adam_(cfg.motion.train.lr) {
  if (corpus_.records.empty()) throw InvalidInput("train-motion: empty corpus");
  if (cfg.motion.train.batch_size < 1)
    throw InvalidInput("train-motion: empty batch");
  if (cfg.motion.postnet_steps < 0 ||
      cfg.motion.postnet_steps > cfg.motion.train.max_steps)
    throw InvalidInput("train-motion: postnet_steps must lie in [0, max_steps]");
  for (const auto& rec : corpus_.records) {
    if (!rec.landmark_path)
      throw InvalidInput("train-motion: record '" + rec.utterance_id +
                         "' has no landmark track");
  }
}

const MotionTrainer::Clip& MotionTrainer::clip(size_t idx) {
  if (!clips_[idx]) {
    const UtteranceRecord& rec = corpus_.at(idx);
    const Waveform wave = read_wav(rec.audio_path);
    Clip c;
    const MelSpectrogram mel = compute_mel(wave, cfg_.features);
    c.mel = mel.values;
    c.pitch = extract_pitch(wave, cfg_.features);
    LandmarkFile lf = read_landmarks(*rec.landmark_path);
    if (lf.landmarks.frames() != mel.frames()) {
      throw InvalidInput("train-motion: landmark frames " +
                         std::to_string(lf.landmarks.frames()) +
                         " != mel frames " + std::to_string(mel.frames()) +
                         " for '" + rec.utterance_id + "'");
    }
    if (!norm_fitted_) {
      model_->normalization() = fit_normalization(lf.landmarks);
      norm_fitted_ = true;
    }
    c.landmarks =
        apply_normalization(lf.landmarks, model_->normalization()).points;
    clips_[idx] = std::move(c);
  }
  return *clips_[idx];
}

VAELossReport MotionTrainer::step() {
  const MotionConfig& mc = cfg_.motion;
  const TrainConfig& tc = mc.train;
  Rng rng(mix_seed(tc.seed, kStepSalt, static_cast<uint64_t>(step_)));
  const int64_t vae_steps = tc.max_steps - mc.postnet_steps;
  const bool postnet_phase = step_ >= vae_steps;
  if (!norm_fitted_) {
    // pin the normalization to the first loadable clip
    for (size_t i = 0; i < corpus_.size() && !norm_fitted_; ++i) {
      try {
        clip(i);
      } catch (const Error&) {
        if (tc.strict) throw;
      }
    }
    if (!norm_fitted_)
      throw InvalidInput("train-motion: no usable clip in corpus");
  }
  const double warm =
      mc.kl_warmup_steps > 0
          ? std::min(1.0, static_cast<double>(step_ + 1) / mc.kl_warmup_steps)
          : 1.0;
  const double lambda_kl = mc.lambda_kl * warm;

  auto pick_clip = [&](Rng& r) -> const Clip& {
    size_t idx = static_cast<size_t>(
        r.uniform_int(static_cast<int64_t>(corpus_.size())));
    for (size_t tries = 0; tries < corpus_.size(); ++tries) {
      try {
        return clip(idx);
      } catch (const Error&) {
        if (tc.strict) throw;
        idx = (idx + 1) % corpus_.size();  // skip-with-log
      }
    }
    throw InvalidInput("train-motion: no usable clip in corpus");
  };

  ag::Var loss;
  VAELossReport rep;
  rep.lambda_kl = lambda_kl;
  for (int b = 0; b < tc.batch_size; ++b) {
    const Clip& c = pick_clip(rng);
    ag::Var content = model_->content_features_var(c.mel);
    ag::Var cond = model_->conditioning_var(content, c.pitch);
    ag::Var item;
    if (!postnet_phase) {
      auto [mu, logvar] = model_->posterior_var(cond, c.landmarks);
      Tensor eps({mu.rows(), mu.cols()});
      for (int64_t i = 0; i < eps.numel(); ++i) eps.at(i) = rng.normal();
      ag::Var z = ag::add(
          mu, ag::mul(ag::exp_op(ag::mul_scalar(logvar, 0.5)),
                      ag::Var::constant(eps)));
      ag::Var recon = model_->decode_var(cond, z);
      ag::Var recon_term =
          ag::mse(recon, ag::Var::constant(c.landmarks));
      // kl = mean(0.5 * (mu^2 + e^lv - 1 - lv))
      ag::Var kl_term = ag::mul_scalar(
          ag::mean_all(ag::sub(
              ag::add(ag::square(mu), ag::exp_op(logvar)),
              ag::add_scalar(logvar, 1.0))),
          0.5);
      item = ag::add(recon_term, ag::mul_scalar(kl_term, lambda_kl));
      const VAELossReport item_rep = vae_loss(
          recon.value(), c.landmarks, mu.value(), logvar.value(), lambda_kl);
      rep.recon += item_rep.recon / tc.batch_size;
      rep.kl += item_rep.kl / tc.batch_size;
    } else {
      // postnet phase: refine the frozen mean-mode VAE output
      Tensor z = Tensor::zeros({cond.rows(), mc.d_latent});
      Tensor vae_out =
          model_->decode_var(ag::detach(cond), ag::Var::constant(z)).value();
      ag::Var refined = model_->postnet_var(ag::Var::constant(vae_out));
      item = ag::mse(refined, ag::Var::constant(c.landmarks));
      rep.recon += item.value().at(0) / tc.batch_size;
    }
    loss = b == 0 ? item : ag::add(loss, item);
  }
  rep.total = rep.recon + rep.lambda_kl * rep.kl;
  loss = ag::mul_scalar(loss, 1.0 / static_cast<double>(tc.batch_size));
  model_->params().zero_grads();
  ag::backward(loss);
  adam_.step(model_->params(), postnet_phase ? "post." : "");
  if (!std::isfinite(loss.value().at(0)))
    throw DivergedError("train-motion: non-finite loss at step " +
                        std::to_string(step_));
  ++step_;
  return rep;
}

void MotionTrainer::run(const MotionCallback& cb) {
  while (step_ < cfg_.motion.train.max_steps) {
    VAELossReport rep = step();
    if (cb) cb(step_, rep);
  }
}

void MotionTrainer::save(const std::string& path) const {
  Checkpoint ckpt;
  ckpt.kind = "motion";
  ckpt.config_hash = config_hash(cfg_, "motion");
  ckpt.step = static_cast<uint64_t>(step_);
  model_->save_state(ckpt);
  save_adam_state(ckpt, "adam", adam_);
  ckpt.put_scalar("norm_fitted", norm_fitted_ ? 1.0 : 0.0);
  save_checkpoint(path, ckpt);
}

void MotionTrainer::resume_from(const std::string& path) {
  Checkpoint ckpt = load_checkpoint(path, "motion", config_hash(cfg_, "motion"));
  model_->load_state(ckpt);
  load_adam_state(ckpt, "adam", adam_);
  step_ = static_cast<int64_t>(ckpt.step);
  norm_fitted_ = ckpt.has("norm_fitted") && ckpt.scalar("norm_fitted") > 0.5;
}

}  // namespace adatta
