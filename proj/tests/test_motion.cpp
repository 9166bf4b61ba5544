#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "core/errors.h"
#include "motion/landmark_io.h"
#include "motion/model.h"
#include "pipeline/toydata.h"
#include "support/testutil.h"
#include "tts/model.h"

using namespace adatta;

namespace {

Waveform tone(double freq, double seconds, int sr) {
  Waveform w;
  w.sample_rate = sr;
  const int64_t n = static_cast<int64_t>(seconds * sr);
  for (int64_t i = 0; i < n; ++i)
    w.samples.push_back(0.5 * std::sin(2.0 * 3.14159265358979 * freq * i / sr));
  return w;
}

}  // namespace

TEST_CASE("vae_loss: perfect fit with prior-matched posterior is zero") {
  Tensor lms = Tensor::zeros({4, kLandmarkDims});
  Tensor mu = Tensor::zeros({4, 8});
  Tensor logvar = Tensor::zeros({4, 8});
  const VAELossReport rep = vae_loss(lms, lms, mu, logvar, 0.01);
  CHECK(rep.recon == 0.0);
  CHECK(rep.kl == 0.0);
  CHECK(rep.total == 0.0);
}

TEST_CASE("vae_loss: kl matches the closed-form per-dimension oracle") {
  Rng rng(1);
  Tensor mu = Tensor::randn({3, 5}, 0.8, rng);
  Tensor logvar = Tensor::randn({3, 5}, 0.5, rng);
  Tensor lms = Tensor::randn({3, kLandmarkDims}, 0.2, rng);
  Tensor recon = Tensor::randn({3, kLandmarkDims}, 0.2, rng);
  double kl_oracle = 0.0;
  for (int64_t i = 0; i < mu.numel(); ++i) {
    kl_oracle += 0.5 * (mu.at(i) * mu.at(i) + std::exp(logvar.at(i)) - 1.0 -
                        logvar.at(i));
  }
  kl_oracle /= static_cast<double>(mu.numel());
  const VAELossReport rep = vae_loss(recon, lms, mu, logvar, 0.3);
  CHECK(rep.kl == doctest::Approx(kl_oracle).epsilon(1e-12));
  CHECK(rep.total == doctest::Approx(rep.recon + 0.3 * rep.kl).epsilon(1e-12));
  CHECK(rep.kl >= 0.0);

  Tensor bad = Tensor::zeros({2, kLandmarkDims});
  CHECK_THROWS_AS(vae_loss(recon, bad, mu, logvar, 0.3), InvalidInput);
}

TEST_CASE("vae_loss: kl is non-negative and zero only at the prior") {
  Rng rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    Tensor mu = Tensor::randn({2, 3}, 1.5, rng);
    Tensor logvar = Tensor::randn({2, 3}, 1.5, rng);
    Tensor lms = Tensor::zeros({2, kLandmarkDims});
    const VAELossReport rep = vae_loss(lms, lms, mu, logvar, 1.0);
    CHECK(rep.kl >= 0.0);
  }
}

TEST_CASE("encode_audio_features: frame contract, determinism, content sensitivity") {
  const PipelineConfig cfg = testutil::tiny_config();
  MotionModel model(cfg.motion, cfg.features.n_mels, 3);
  const Waveform wave = tone(260.0, 1.0, cfg.features.sample_rate);
  const AudioFeatureSequence feats = model.encode_audio_features(wave, cfg.features);
  CHECK(feats.frames() == compute_mel(wave, cfg.features).frames());
  CHECK(feats.pitch.frames() == feats.frames());
  CHECK(feats.content_features.cols() == cfg.motion.d_feat);

  const AudioFeatureSequence again = model.encode_audio_features(wave, cfg.features);
  for (int64_t i = 0; i < feats.content_features.numel(); ++i)
    CHECK(feats.content_features.at(i) == again.content_features.at(i));

  // synthetic tone vs noise burst: mean features must separate by a margin
  Waveform noise;
  noise.sample_rate = cfg.features.sample_rate;
  Rng rng(4);
  for (int i = 0; i < cfg.features.sample_rate; ++i)
    noise.samples.push_back(rng.uniform(-0.5, 0.5));
  const AudioFeatureSequence nf = model.encode_audio_features(noise, cfg.features);
  const Tensor mean_tone = temporal_mean(feats.content_features);
  const Tensor mean_noise = temporal_mean(nf.content_features);
  double dist = 0.0;
  for (int64_t c = 0; c < mean_tone.cols(); ++c) {
    const double d = mean_tone.at(0, c) - mean_noise.at(0, c);
    dist += d * d;
  }
  // pinned margin, measured at 19.4 for this seed and architecture
  CHECK(std::sqrt(dist) > 1.0);

  Waveform empty;
  empty.sample_rate = cfg.features.sample_rate;
  CHECK_THROWS_AS(model.encode_audio_features(empty, cfg.features), InvalidInput);
}

TEST_CASE("vae_audio_to_motion: determinism, length preservation, modes") {
  const PipelineConfig cfg = testutil::tiny_config();
  MotionModel model(cfg.motion, cfg.features.n_mels, 5);
  const Waveform wave = tone(200.0, 0.25, cfg.features.sample_rate);
  const AudioFeatureSequence feats = model.encode_audio_features(wave, cfg.features);

  const LandmarkSequence a = model.vae_audio_to_motion(feats, MotionMode::kMean, 0);
  const LandmarkSequence b = model.vae_audio_to_motion(feats, MotionMode::kMean, 99);
  REQUIRE(a.frames() == feats.frames());
  for (int64_t i = 0; i < a.points.numel(); ++i)
    CHECK(a.points.at(i) == b.points.at(i));  // mean mode ignores the seed
  a.validate();

  const LandmarkSequence s1 = model.vae_audio_to_motion(feats, MotionMode::kSample, 42);
  const LandmarkSequence s2 = model.vae_audio_to_motion(feats, MotionMode::kSample, 42);
  for (int64_t i = 0; i < s1.points.numel(); ++i)
    CHECK(s1.points.at(i) == s2.points.at(i));

  // single-frame input stays single-frame
  AudioFeatureSequence one;
  one.content_features = Tensor::zeros({1, cfg.motion.d_feat});
  one.pitch.f0 = {120.0};
  one.pitch.voiced = {true};
  CHECK(model.vae_audio_to_motion(one, MotionMode::kMean, 0).frames() == 1);
}

TEST_CASE("postnet_refine: zero-initialized postnet is the identity map") {
  const PipelineConfig cfg = testutil::tiny_config();
  MotionModel model(cfg.motion, cfg.features.n_mels, 6);
  Rng rng(7);
  LandmarkSequence lms;
  lms.points = Tensor({9, kLandmarkDims});
  for (int64_t i = 0; i < lms.points.numel(); ++i)
    lms.points.at(i) = rng.uniform(-1.0, 1.0);
  const LandmarkSequence out = model.postnet_refine(lms);
  REQUIRE(out.points.same_shape(lms.points));
  for (int64_t i = 0; i < lms.points.numel(); ++i)
    CHECK(out.points.at(i) == lms.points.at(i));  // bit-exact passthrough
}

TEST_CASE("motion stack: temporally shuffled features change the output") {
  const PipelineConfig cfg = testutil::tiny_config();
  MotionModel model(cfg.motion, cfg.features.n_mels, 8);
  const Waveform wave = tone(220.0, 0.5, cfg.features.sample_rate);
  AudioFeatureSequence feats = model.encode_audio_features(wave, cfg.features);
  const LandmarkSequence base = model.vae_audio_to_motion(feats, MotionMode::kMean, 0);

  // reverse the feature frames (a deterministic shuffle)
  AudioFeatureSequence shuffled = feats;
  const int64_t t_len = feats.frames();
  for (int64_t t = 0; t < t_len; ++t)
    for (int64_t c = 0; c < feats.content_features.cols(); ++c)
      shuffled.content_features.at(t, c) =
          feats.content_features.at(t_len - 1 - t, c);
  const LandmarkSequence moved = model.vae_audio_to_motion(shuffled, MotionMode::kMean, 0);
  double mae = 0.0;
  for (int64_t i = 0; i < base.points.numel(); ++i)
    mae += std::abs(base.points.at(i) - moved.points.at(i));
  mae /= static_cast<double>(base.points.numel());
  CHECK(mae > 1e-6);
}

TEST_CASE("landmark io: round trip preserves header and data") {
  testutil::TempDir tmp("lmk");
  Rng rng(9);
  LandmarkFile file;
  file.landmarks.points = Tensor({5, kLandmarkDims});
  for (int64_t i = 0; i < file.landmarks.points.numel(); ++i)
    file.landmarks.points.at(i) = rng.uniform(-1.0, 1.0);
  file.fps = 80.0;
  file.norm.scale = 1.7;
  file.norm.translate[1] = 0.25;
  write_landmarks(tmp.path("a.lmk"), file);
  const LandmarkFile r = read_landmarks(tmp.path("a.lmk"));
  CHECK(r.fps == file.fps);
  CHECK(r.norm.scale == file.norm.scale);
  CHECK(r.norm.translate[1] == file.norm.translate[1]);
  REQUIRE(r.landmarks.points.same_shape(file.landmarks.points));
  for (int64_t i = 0; i < r.landmarks.points.numel(); ++i)
    CHECK(r.landmarks.points.at(i) == file.landmarks.points.at(i));
  CHECK_THROWS_AS(read_landmarks(tmp.path("missing.lmk")), IoError);
}

TEST_CASE("landmark normalization: removes translation and scale") {
  Rng rng(10);
  LandmarkSequence raw;
  raw.points = Tensor({3, kLandmarkDims});
  for (int64_t i = 0; i < raw.points.numel(); ++i)
    raw.points.at(i) = 0.4 * rng.normal() + 2.0;  // offset cloud
  const LandmarkNormalization norm = fit_normalization(raw);
  const LandmarkSequence fixed = apply_normalization(raw, norm);
  double mean = 0.0;
  for (int64_t i = 0; i < fixed.points.numel(); ++i) mean += fixed.points.at(i);
  mean /= static_cast<double>(fixed.points.numel());
  CHECK(std::abs(mean) < 1e-9);
}

TEST_CASE("motion trainer: losses fall, checkpoint resumes bit-exactly") {
  testutil::TempDir tmp("motion_train");
  PipelineConfig cfg = testutil::tiny_config();
  ToyCorpusSpec spec;
  spec.num_speakers = 1;
  spec.utterances_per_speaker = 1;
  spec.phonemes_per_utterance = 3;
  spec.base_frames_per_phoneme = 6;
  const CorpusManifest corpus = load_corpus(make_toy_corpus(tmp.path("corpus"), cfg, spec));

  cfg.motion.train.max_steps = 10;
  cfg.motion.postnet_steps = 4;
  MotionTrainer full(cfg, corpus);
  full.run();
  full.save(tmp.path("full.ckpt"));

  PipelineConfig cfg_half = cfg;
  cfg_half.motion.train.max_steps = 5;
  cfg_half.motion.postnet_steps = 0;
  // same phase boundary as the full run requires consistent configuration,
  // so resume instead from a mid-run checkpoint of the same config
  MotionTrainer first(cfg, corpus);
  while (first.current_step() < 5) first.step();
  first.save(tmp.path("half.ckpt"));
  MotionTrainer second(cfg, corpus);
  second.resume_from(tmp.path("half.ckpt"));
  second.run();
  second.save(tmp.path("resumed.ckpt"));

  const Checkpoint a = load_checkpoint(tmp.path("full.ckpt"), "motion", 0);
  const Checkpoint b = load_checkpoint(tmp.path("resumed.ckpt"), "motion", 0);
  REQUIRE(a.tensors.size() == b.tensors.size());
  for (const auto& [name, t] : a.tensors) {
    const Tensor& other = b.get(name);
    for (int64_t i = 0; i < t.numel(); ++i) CHECK(t.at(i) == other.at(i));
  }
}

TEST_CASE("postnet: trained refinement moves the mean face toward the "
          "identity template") {
  testutil::TempDir tmp("postnet");
  PipelineConfig cfg = testutil::tiny_config();
  cfg.motion.train.max_steps = 400;
  cfg.motion.postnet_steps = 150;
  cfg.motion.train.lr = 3e-3;
  ToyCorpusSpec spec;
  spec.num_speakers = 1;
  spec.utterances_per_speaker = 1;
  spec.phonemes_per_utterance = 3;
  spec.base_frames_per_phoneme = 7;
  const CorpusManifest corpus = load_corpus(make_toy_corpus(tmp.path("c"), cfg, spec));
  MotionTrainer trainer(cfg, corpus);
  trainer.run();

  const Waveform wave = read_wav(corpus.at(0).audio_path);
  const AudioFeatureSequence feats =
      trainer.model().encode_audio_features(wave, cfg.features);
  const LandmarkSequence raw =
      trainer.model().vae_audio_to_motion(feats, MotionMode::kMean, 0);
  const LandmarkSequence refined = trainer.model().postnet_refine(raw);

  // identity template: per-point temporal mean of the training landmarks
  const LandmarkFile lf = read_landmarks(*corpus.at(0).landmark_path);
  const LandmarkSequence target =
      apply_normalization(lf.landmarks, trainer.model().normalization());
  auto point_mean = [](const LandmarkSequence& lms) {
    std::vector<double> mean(static_cast<size_t>(kLandmarkDims), 0.0);
    for (int64_t t = 0; t < lms.frames(); ++t)
      for (int64_t i = 0; i < kLandmarkDims; ++i)
        mean[static_cast<size_t>(i)] += lms.points.at(t, i) / lms.frames();
    return mean;
  };
  const std::vector<double> template_mean = point_mean(target);
  auto distance_to_template = [&](const LandmarkSequence& lms) {
    const std::vector<double> mean = point_mean(lms);
    double acc = 0.0;
    for (int64_t i = 0; i < kLandmarkDims; ++i) {
      const double d = mean[static_cast<size_t>(i)] - template_mean[static_cast<size_t>(i)];
      acc += d * d;
    }
    return std::sqrt(acc / kLandmarkDims);
  };
  CHECK(distance_to_template(refined) < distance_to_template(raw));
}

TEST_CASE("motion trainer: rejects corpora without landmark tracks") {
  testutil::TempDir tmp("motion_nolmk");
  PipelineConfig cfg = testutil::tiny_config();
  ToyCorpusSpec spec;
  spec.num_speakers = 1;
  spec.utterances_per_speaker = 1;
  spec.with_landmarks = false;
  const CorpusManifest corpus = load_corpus(make_toy_corpus(tmp.path("corpus"), cfg, spec));
  CHECK_THROWS_AS(MotionTrainer(cfg, corpus), InvalidInput);
}

TEST_CASE("motion trainer: lenient mode skips clips with broken alignment") {
  testutil::TempDir tmp("motion_lenient");
  PipelineConfig cfg = testutil::tiny_config();
  ToyCorpusSpec spec;
  spec.num_speakers = 1;
  spec.utterances_per_speaker = 2;
  spec.phonemes_per_utterance = 3;
  spec.base_frames_per_phoneme = 6;
  CorpusManifest corpus = load_corpus(make_toy_corpus(tmp.path("corpus"), cfg, spec));
  // truncate the first clip's landmark track so its frame count disagrees
  {
    LandmarkFile lf = read_landmarks(*corpus.records[0].landmark_path);
    Tensor cut({lf.landmarks.frames() - 3, kLandmarkDims});
    for (int64_t t = 0; t < cut.rows(); ++t)
      for (int64_t c = 0; c < kLandmarkDims; ++c)
        cut.at(t, c) = lf.landmarks.points.at(t, c);
    lf.landmarks.points = cut;
    write_landmarks(*corpus.records[0].landmark_path, lf);
  }
  {
    PipelineConfig strict_cfg = cfg;
    strict_cfg.motion.train.strict = true;
    MotionTrainer trainer(strict_cfg, corpus);
    CHECK_THROWS_AS(trainer.run(), InvalidInput);
  }
  {
    PipelineConfig lenient_cfg = cfg;
    lenient_cfg.motion.train.strict = false;
    MotionTrainer trainer(lenient_cfg, corpus);
    trainer.run();
    CHECK(trainer.current_step() == lenient_cfg.motion.train.max_steps);
  }
}
