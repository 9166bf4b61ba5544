#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>

#include "core/errors.h"
#include "pipeline/config.h"
#include "pipeline/manifest.h"
#include "pipeline/metrics.h"
#include "pipeline/toydata.h"
#include "support/testutil.h"
#include "tts/train.h"

using namespace adatta;

namespace {

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path);
  f << text;
}

}  // namespace

TEST_CASE("load_corpus: validation catalogue") {
  testutil::TempDir tmp("manifest");
  // a real wav the records can point at
  Waveform w;
  w.sample_rate = 16000;
  w.samples.assign(1600, 0.1);
  write_wav(tmp.path("a.wav"), w);

  SUBCASE("empty file reports no records") {
    write_text(tmp.path("m.jsonl"), "");
    CHECK_THROWS_WITH_AS(load_corpus(tmp.path("m.jsonl")),
                         doctest::Contains("no records"), ManifestError);
  }
  SUBCASE("two valid records keep order") {
    write_text(tmp.path("m.jsonl"),
               R"({"id":"u1","audio":"a.wav","speaker":"s","phonemes":[1,2],"durations":[3,4]})"
               "\n"
               R"({"id":"u2","audio":"a.wav","speaker":"s","phonemes":[5],"durations":[6]})"
               "\n");
    const CorpusManifest m = load_corpus(tmp.path("m.jsonl"));
    REQUIRE(m.size() == 2);
    CHECK(m.at(0).utterance_id == "u1");
    CHECK(m.at(1).utterance_id == "u2");
    CHECK(m.at(0).durations == std::vector<int64_t>{3, 4});
  }
  SUBCASE("duration/phoneme length mismatch names the record") {
    write_text(tmp.path("m.jsonl"),
               R"({"id":"broken","audio":"a.wav","speaker":"s","phonemes":[1,2],"durations":[3]})"
               "\n");
    CHECK_THROWS_WITH_AS(load_corpus(tmp.path("m.jsonl")),
                         doctest::Contains("broken"), ManifestError);
  }
  SUBCASE("duplicate ids rejected") {
    write_text(tmp.path("m.jsonl"),
               R"({"id":"dup","audio":"a.wav","speaker":"s","phonemes":[1],"durations":[2]})"
               "\n"
               R"({"id":"dup","audio":"a.wav","speaker":"s","phonemes":[1],"durations":[2]})"
               "\n");
    CHECK_THROWS_WITH_AS(load_corpus(tmp.path("m.jsonl")),
                         doctest::Contains("duplicate"), ManifestError);
  }
  SUBCASE("missing audio file rejected with the record name") {
    write_text(tmp.path("m.jsonl"),
               R"({"id":"ghost","audio":"gone.wav","speaker":"s","phonemes":[1],"durations":[2]})"
               "\n");
    CHECK_THROWS_WITH_AS(load_corpus(tmp.path("m.jsonl")),
                         doctest::Contains("ghost"), ManifestError);
  }
  SUBCASE("comments and blank lines are skipped") {
    write_text(tmp.path("m.jsonl"),
               "# header comment\n\n"
               R"({"id":"u1","audio":"a.wav","speaker":"s","phonemes":[1],"durations":[2]})"
               "\n");
    CHECK(load_corpus(tmp.path("m.jsonl")).size() == 1);
  }
  SUBCASE("malformed json names the line") {
    write_text(tmp.path("m.jsonl"), "{not json\n");
    CHECK_THROWS_WITH_AS(load_corpus(tmp.path("m.jsonl")),
                         doctest::Contains("line 1"), ManifestError);
  }
}

TEST_CASE("config: defaults, file overlay, overrides, validation") {
  testutil::TempDir tmp("config");
  PipelineConfig cfg = default_config();
  CHECK(cfg.features.n_mels == 80);
  CHECK(cfg.tts.d_model == 192);
  CHECK(cfg.pllm.width == 256);

  write_text(tmp.path("c.json"), R"({
    "features": {"hop_length": 160, "n_mels": 40},
    "tts": {"d_model": 32, "train": {"max_steps": 7, "lambda_adv": 0.0}},
    "render": {"fps": 30}
  })");
  cfg = load_config_file(tmp.path("c.json"));
  CHECK(cfg.features.hop_length == 160);
  CHECK(cfg.features.n_mels == 40);
  CHECK(cfg.tts.d_model == 32);
  CHECK(cfg.tts.train.max_steps == 7);
  CHECK(cfg.tts.train.lambda_adv == 0.0);
  CHECK(cfg.render.fps == 30);
  CHECK(cfg.pllm.width == 256);  // untouched sections keep defaults

  apply_override(cfg, "tts.train.max_steps", "42");
  CHECK(cfg.tts.train.max_steps == 42);
  apply_override(cfg, "features.fmax", "7000.5");
  CHECK(cfg.features.fmax == 7000.5);
  apply_override(cfg, "tts.train.strict", "false");
  CHECK_FALSE(cfg.tts.train.strict);

  PipelineConfig bad = default_config();
  bad.features.n_mels = 10;
  CHECK_THROWS_AS(bad.validate(), InvalidInput);
  bad = default_config();
  bad.pllm.width = 30;  // not divisible by heads
  CHECK_THROWS_AS(bad.validate(), InvalidInput);
  CHECK_THROWS_AS(load_config_file(tmp.path("missing.json")), IoError);
  write_text(tmp.path("broken.json"), "{");
  CHECK_THROWS_AS(load_config_file(tmp.path("broken.json")), InvalidInput);
}

TEST_CASE("config hash: sensitive to features and own section only") {
  PipelineConfig a = default_config();
  PipelineConfig b = a;
  CHECK(config_hash(a, "tts") == config_hash(b, "tts"));
  b.features.hop_length = 100;
  CHECK(config_hash(a, "tts") != config_hash(b, "tts"));
  CHECK(config_hash(a, "pllm") != config_hash(b, "pllm"));
  CHECK(config_hash(a, "motion") != config_hash(b, "motion"));
  b = a;
  b.motion.hidden = 64;
  CHECK(config_hash(a, "tts") == config_hash(b, "tts"));
  CHECK(config_hash(a, "motion") != config_hash(b, "motion"));
  CHECK_THROWS_AS(config_hash(a, "mystery"), InvalidInput);
}

TEST_CASE("eval_speaker_similarity: closed-form cases") {
  Tensor a({1, 2});
  a.at(0, 0) = 1.0;
  CHECK(eval_speaker_similarity(a, a) == doctest::Approx(1.0));
  Tensor b({1, 2});
  b.at(0, 1) = 1.0;
  CHECK(eval_speaker_similarity(a, b) == doctest::Approx(0.0));
  Tensor c({1, 2});
  c.at(0, 0) = 1.0;
  c.at(0, 1) = 1.0;
  CHECK(eval_speaker_similarity(a, c) == doctest::Approx(0.70711).epsilon(1e-4));
  Tensor zero({1, 2});
  CHECK_THROWS_AS(eval_speaker_similarity(a, zero), InvalidInput);
  Tensor longer({1, 3});
  CHECK_THROWS_AS(eval_speaker_similarity(a, longer), InvalidInput);
}

TEST_CASE("codebook_perplexity: entropy cases") {
  CHECK(codebook_perplexity({5, 5, 5, 5}) == doctest::Approx(1.0));
  std::vector<int64_t> uniform;
  for (int64_t c = 0; c < 64; ++c) uniform.push_back(c);
  CHECK(codebook_perplexity(uniform) == doctest::Approx(64.0));
  // counts [2,2,4]: H = -sum p ln p, exp(H) = 2.8284
  CHECK(codebook_perplexity({0, 0, 1, 1, 2, 2, 2, 2}) ==
        doctest::Approx(2.8284).epsilon(1e-4));
  CHECK_THROWS_AS(codebook_perplexity({}), InvalidInput);
}

TEST_CASE("linear probe: random labels score near chance") {
  Rng rng(13);
  std::vector<std::vector<double>> train_x, test_x;
  std::vector<int64_t> train_y, test_y;
  for (int i = 0; i < 24; ++i) {
    std::vector<double> row(6);
    for (auto& v : row) v = rng.normal();
    if (i % 2 == 0) {
      train_x.push_back(row);
      train_y.push_back(rng.uniform_int(2));
    } else {
      test_x.push_back(row);
      test_y.push_back(rng.uniform_int(2));
    }
  }
  const double acc = linear_probe_accuracy(train_x, train_y, test_x, test_y, 2, 7);
  CHECK(acc >= 0.5 - 0.15 - 1e-9);
  CHECK(acc <= 0.5 + 0.15 + 1e-9);
}

TEST_CASE("disentanglement probe: report contract and separable toy corpus") {
  testutil::TempDir tmp("probe");
  PipelineConfig cfg = testutil::tiny_config();
  ToyCorpusSpec spec;
  spec.num_speakers = 2;
  spec.utterances_per_speaker = 6;
  spec.phonemes_per_utterance = 4;
  spec.base_frames_per_phoneme = 5;
  spec.with_landmarks = false;
  const CorpusManifest corpus = load_corpus(make_toy_corpus(tmp.path("c"), cfg, spec));
  TtsModel tts(cfg.tts, cfg.features.n_mels, 5);
  FeatureCache features(corpus, cfg.features);
  const DisentanglementReport rep = disentanglement_probe(cfg, corpus, tts, features);
  CHECK(rep.train_items == 6);
  CHECK(rep.test_items == 6);
  CHECK(rep.gap == doctest::Approx(rep.timbre_accuracy - rep.prosody_accuracy));
  // distinct synthetic timbres separate cleanly even at random init
  CHECK(rep.timbre_accuracy >= 0.9);

  // single-speaker corpus is rejected
  ToyCorpusSpec single = spec;
  single.num_speakers = 1;
  const CorpusManifest one =
      load_corpus(make_toy_corpus(tmp.path("one"), cfg, single));
  FeatureCache features_one(one, cfg.features);
  CHECK_THROWS_AS(disentanglement_probe(cfg, one, tts, features_one), InvalidInput);
}

TEST_CASE("toy corpus: low mel bands are speaker-invariant by construction") {
  testutil::TempDir tmp("toylow");
  PipelineConfig cfg = testutil::tiny_config();
  // same phoneme sequence rendered by two speakers
  const std::vector<int64_t> phonemes = {3, 9, 5};
  const std::vector<int64_t> durations = {8, 8, 8};
  const Waveform a = synth_toy_utterance(phonemes, durations, 0, cfg.features, 7);
  const Waveform b = synth_toy_utterance(phonemes, durations, 1, cfg.features, 7);
  const ProsodyBands ba = slice_prosody_bands(compute_mel(a, cfg.features));
  const ProsodyBands bb = slice_prosody_bands(compute_mel(b, cfg.features));
  const MelSpectrogram fa = compute_mel(a, cfg.features);
  const MelSpectrogram fb = compute_mel(b, cfg.features);
  double low_mae = 0.0, full_mae = 0.0;
  for (int64_t t = 0; t < ba.values.rows(); ++t)
    for (int64_t k = 0; k < 20; ++k)
      low_mae += std::abs(ba.values.at(t, k) - bb.values.at(t, k));
  low_mae /= static_cast<double>(ba.values.numel());
  for (int64_t i = 0; i < fa.values.numel(); ++i)
    full_mae += std::abs(fa.values.at(i) - fb.values.at(i));
  full_mae /= static_cast<double>(fa.values.numel());
  // prosody bands nearly identical across speakers, full band clearly not
  CHECK(low_mae < 0.1 * full_mae);
}

TEST_CASE("checkpoint container: roundtrip, kind and hash guards") {
  testutil::TempDir tmp("ckpt");
  Checkpoint ckpt;
  ckpt.kind = "tts";
  ckpt.config_hash = 0xfeedULL;
  ckpt.step = 17;
  Rng rng(3);
  ckpt.tensors["w"] = Tensor::randn({3, 4}, 1.0, rng);
  ckpt.put_scalar("s", 2.5);
  save_checkpoint(tmp.path("c.ckpt"), ckpt);

  const Checkpoint r = load_checkpoint(tmp.path("c.ckpt"), "tts", 0xfeedULL);
  CHECK(r.step == 17);
  CHECK(r.scalar("s") == 2.5);
  const Tensor& w = r.get("w");
  REQUIRE(w.same_shape(ckpt.tensors.at("w")));
  for (int64_t i = 0; i < w.numel(); ++i)
    CHECK(w.at(i) == ckpt.tensors.at("w").at(i));

  CHECK_THROWS_AS(load_checkpoint(tmp.path("c.ckpt"), "pllm", 0xfeedULL),
                  InvalidInput);
  CHECK_THROWS_AS(load_checkpoint(tmp.path("c.ckpt"), "tts", 0xdeadULL),
                  InvalidInput);
  CHECK_NOTHROW(load_checkpoint(tmp.path("c.ckpt"), "tts", 0xdeadULL, true));
  CHECK_THROWS_AS(load_checkpoint(tmp.path("none.ckpt"), "tts", 0), IoError);
  write_text(tmp.path("junk.ckpt"), "not a checkpoint at all");
  CHECK_THROWS_AS(load_checkpoint(tmp.path("junk.ckpt"), "tts", 0), IoError);
}
