#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include "adatta/adatta.h"
#include "support/fileutil.h"

namespace fs = std::filesystem;

namespace {

struct Ctx {
  testutil::TempDir tmp{"capi"};
  ada_config* cfg = nullptr;
  std::string manifest;

  Ctx() {
    cfg = ada_config_create();
    REQUIRE(cfg != nullptr);
    // tiny setup so training finishes in seconds
    set("tts.d_model", "16");
    set("tts.d_timbre", "16");
    set("tts.d_code", "8");
    set("tts.codebook_size", "16");
    set("tts.conv_kernel", "3");
    set("tts.encoder_blocks", "1");
    set("tts.decoder_blocks", "1");
    set("tts.train.max_steps", "8");
    set("tts.train.adv_warmup_steps", "4");
    set("pllm.layers", "1");
    set("pllm.heads", "2");
    set("pllm.width", "16");
    set("pllm.train.max_steps", "8");
    set("motion.d_feat", "8");
    set("motion.d_latent", "4");
    set("motion.hidden", "16");
    set("motion.encoder_blocks", "1");
    set("motion.decoder_blocks", "1");
    set("motion.train.max_steps", "8");
    set("motion.postnet_steps", "3");
    set("render.width", "96");
    set("render.height", "96");
    REQUIRE(ada_make_demo_corpus(cfg, tmp.path("corpus").c_str(), 2, 2, 11) == ADA_OK);
    manifest = tmp.path("corpus/manifest.jsonl");
  }
  ~Ctx() { ada_config_free(cfg); }
  void set(const char* key, const char* value) {
    REQUIRE(ada_config_set(cfg, key, value) == ADA_OK);
  }
};

}  // namespace

TEST_CASE("c api: version and config basics") {
  CHECK(std::strlen(ada_version()) > 0);
  ada_config* cfg = ada_config_create();
  CHECK(ada_config_set(cfg, "features.n_mels", "32") == ADA_OK);
  CHECK(ada_config_set(cfg, "features.n_mels", "4") == ADA_ERR_INVALID);
  CHECK(std::strlen(ada_last_error()) > 0);
  CHECK(ada_config_set(nullptr, "a", "b") == ADA_ERR_INVALID);
  CHECK(ada_config_load_file(cfg, "/no/such/config.json") == ADA_ERR_IO);
  ada_config_free(cfg);
}

TEST_CASE("c api: config file overlay") {
  testutil::TempDir tmp("capi_cfg");
  std::ofstream f(tmp.path("c.json"));
  f << R"({"render": {"fps": 30}, "tts": {"train": {"max_steps": 3}}})";
  f.close();
  ada_config* cfg = ada_config_create();
  CHECK(ada_config_load_file(cfg, tmp.path("c.json").c_str()) == ADA_OK);
  ada_config_free(cfg);
}

TEST_CASE("c api: end-to-end train, synth, eval, probe") {
  Ctx ctx;
  const std::string tts_ckpt = ctx.tmp.path("tts.ckpt");
  const std::string pllm_ckpt = ctx.tmp.path("pllm.ckpt");
  const std::string motion_ckpt = ctx.tmp.path("motion.ckpt");

  REQUIRE(ada_train_tts(ctx.cfg, ctx.manifest.c_str(), tts_ckpt.c_str(), nullptr) == ADA_OK);
  REQUIRE(ada_train_pllm(ctx.cfg, ctx.manifest.c_str(), tts_ckpt.c_str(),
                         pllm_ckpt.c_str(), nullptr) == ADA_OK);
  REQUIRE(ada_train_motion(ctx.cfg, ctx.manifest.c_str(), motion_ckpt.c_str(),
                           nullptr) == ADA_OK);
  CHECK(fs::exists(tts_ckpt));
  CHECK(fs::exists(pllm_ckpt));
  CHECK(fs::exists(motion_ckpt));

  const int64_t phonemes[] = {1, 4, 2};
  const int64_t durations[] = {6, 7, 6};
  ada_synth_request req{};
  req.phoneme_ids = phonemes;
  req.num_phonemes = 3;
  req.durations = durations;
  req.num_durations = 3;
  const std::string ref = ctx.tmp.path("corpus/spk0_utt0.wav");
  const std::string out = ctx.tmp.path("out.avi");
  const std::string out_wav = ctx.tmp.path("out.wav");
  const std::string frames_dir = ctx.tmp.path("frames");
  req.reference_audio = ref.c_str();
  req.tts_checkpoint = tts_ckpt.c_str();
  req.pllm_checkpoint = pllm_ckpt.c_str();
  req.motion_checkpoint = motion_ckpt.c_str();
  req.output_path = out.c_str();
  req.output_wav = out_wav.c_str();
  req.dump_frames_dir = frames_dir.c_str();
  req.seed = 5;

  ada_synth_stats stats{};
  REQUIRE_MESSAGE(ada_synthesize(ctx.cfg, &req, &stats) == ADA_OK,
                  ada_last_error());
  CHECK(stats.mel_frames == 19);
  CHECK(stats.audio_seconds == doctest::Approx(19.0 * 200 / 16000));
  CHECK(fs::exists(out));
  CHECK(fs::exists(out_wav));
  CHECK(fs::exists(frames_dir + "/frame_000000.ppm"));

  const testutil::AviProbe probe = testutil::probe_avi(out);
  CHECK(probe.video_frames == stats.video_frames);
  CHECK(std::abs(probe.video_seconds() - probe.audio_seconds()) <= 1.0 / 25.0);

  // determinism: a second seeded run produces the same audio hash
  const std::string out2 = ctx.tmp.path("out2.avi");
  req.output_path = out2.c_str();
  req.output_wav = nullptr;
  req.dump_frames_dir = nullptr;
  ada_synth_stats stats2{};
  REQUIRE(ada_synthesize(ctx.cfg, &req, &stats2) == ADA_OK);
  CHECK(stats2.audio_hash == stats.audio_hash);
  CHECK(testutil::read_file_bytes(out) == testutil::read_file_bytes(out2));

  double similarity = -2.0;
  REQUIRE(ada_eval_speaker_similarity(
              ctx.cfg, tts_ckpt.c_str(), ref.c_str(),
              ctx.tmp.path("corpus/spk0_utt1.wav").c_str(),
              &similarity) == ADA_OK);
  CHECK(similarity >= -1.0);
  CHECK(similarity <= 1.0);
  double self_sim = 0.0;
  REQUIRE(ada_eval_speaker_similarity(ctx.cfg, tts_ckpt.c_str(), ref.c_str(),
                                      ref.c_str(), &self_sim) == ADA_OK);
  CHECK(self_sim == doctest::Approx(1.0));

  double perplexity = 0.0;
  REQUIRE(ada_eval_codebook_perplexity(ctx.cfg, tts_ckpt.c_str(),
                                       ctx.manifest.c_str(), &perplexity) == ADA_OK);
  CHECK(perplexity >= 1.0);
  CHECK(perplexity <= 16.0);

  double timbre_acc = 0.0, prosody_acc = 0.0;
  REQUIRE(ada_probe_disentanglement(ctx.cfg, tts_ckpt.c_str(), ctx.manifest.c_str(),
                                    &timbre_acc, &prosody_acc) == ADA_OK);
  CHECK(timbre_acc >= 0.0);
  CHECK(timbre_acc <= 1.0);
  CHECK(prosody_acc >= 0.0);
  CHECK(prosody_acc <= 1.0);
}

TEST_CASE("c api: two-phoneme target with durations [2,3] makes a 5-frame mel") {
  Ctx ctx;
  const std::string tts_ckpt = ctx.tmp.path("t.ckpt");
  const std::string pllm_ckpt = ctx.tmp.path("p.ckpt");
  const std::string motion_ckpt = ctx.tmp.path("m.ckpt");
  REQUIRE(ada_train_tts(ctx.cfg, ctx.manifest.c_str(), tts_ckpt.c_str(), nullptr) == ADA_OK);
  REQUIRE(ada_train_pllm(ctx.cfg, ctx.manifest.c_str(), tts_ckpt.c_str(),
                         pllm_ckpt.c_str(), nullptr) == ADA_OK);
  REQUIRE(ada_train_motion(ctx.cfg, ctx.manifest.c_str(), motion_ckpt.c_str(),
                           nullptr) == ADA_OK);
  const int64_t phonemes[] = {1, 2};
  const int64_t durations[] = {2, 3};
  ada_synth_request req{};
  req.phoneme_ids = phonemes;
  req.num_phonemes = 2;
  req.durations = durations;
  req.num_durations = 2;
  const std::string ref = ctx.tmp.path("corpus/spk0_utt0.wav");
  const std::string out = ctx.tmp.path("tiny.avi");
  req.reference_audio = ref.c_str();
  req.tts_checkpoint = tts_ckpt.c_str();
  req.pllm_checkpoint = pllm_ckpt.c_str();
  req.motion_checkpoint = motion_ckpt.c_str();
  req.output_path = out.c_str();
  ada_synth_stats stats{};
  REQUIRE_MESSAGE(ada_synthesize(ctx.cfg, &req, &stats) == ADA_OK, ada_last_error());
  CHECK(stats.mel_frames == 5);
  // audio runs 5 * hop / sample_rate seconds; video duration must agree
  // within the container tolerance
  CHECK(stats.audio_seconds == doctest::Approx(5.0 * 200 / 16000));
  const testutil::AviProbe probe = testutil::probe_avi(out);
  CHECK(std::abs(probe.video_seconds() - stats.audio_seconds) <=
        1.0 / 25.0 + 0.025);

  // a failing late stage removes partial outputs (here: the frames dir)
  const std::string frames_dir = ctx.tmp.path("partial_frames");
  req.dump_frames_dir = frames_dir.c_str();
  const std::string bad_out = ctx.tmp.path("no_such_dir/out.avi");
  req.output_path = bad_out.c_str();
  CHECK(ada_synthesize(ctx.cfg, &req, nullptr) == ADA_ERR_IO);
  CHECK_FALSE(fs::exists(frames_dir));
  CHECK_FALSE(fs::exists(bad_out));
  const char* msg = ada_last_error();
  CHECK(std::string(msg).find("stage=") != std::string::npos);
}

TEST_CASE("c api: long reference audio is accepted (prompt capped)") {
  Ctx ctx;
  const std::string tts_ckpt = ctx.tmp.path("t2.ckpt");
  const std::string pllm_ckpt = ctx.tmp.path("p2.ckpt");
  const std::string motion_ckpt = ctx.tmp.path("m2.ckpt");
  REQUIRE(ada_train_tts(ctx.cfg, ctx.manifest.c_str(), tts_ckpt.c_str(), nullptr) == ADA_OK);
  REQUIRE(ada_train_pllm(ctx.cfg, ctx.manifest.c_str(), tts_ckpt.c_str(),
                         pllm_ckpt.c_str(), nullptr) == ADA_OK);
  REQUIRE(ada_train_motion(ctx.cfg, ctx.manifest.c_str(), motion_ckpt.c_str(),
                           nullptr) == ADA_OK);

  // stitch a ~33 s reference: 2640 mel frames, 330 pseudo-spans of 8,
  // which exceeds the transformer's packed budget unless the prompt is capped
  const std::string long_ref = ctx.tmp.path("long_ref.wav");
  {
    std::ifstream src(ctx.tmp.path("corpus/spk0_utt0.wav"), std::ios::binary);
    std::vector<char> bytes((std::istreambuf_iterator<char>(src)),
                            std::istreambuf_iterator<char>());
    // raw PCM from byte 44 on; tile it and rewrite the header sizes
    const size_t data = 44;
    std::vector<char> payload(bytes.begin() + data, bytes.end());
    std::vector<char> out(bytes.begin(), bytes.begin() + data);
    while (out.size() < data + 2 * 16000 * 33)
      out.insert(out.end(), payload.begin(), payload.end());
    const uint32_t dsz = static_cast<uint32_t>(out.size() - data);
    const uint32_t rsz = static_cast<uint32_t>(out.size() - 8);
    std::memcpy(out.data() + 4, &rsz, 4);
    std::memcpy(out.data() + 40, &dsz, 4);
    std::ofstream dst(long_ref, std::ios::binary);
    dst.write(out.data(), static_cast<std::streamsize>(out.size()));
  }
  const int64_t phonemes[] = {1, 4, 2};
  ada_synth_request req{};
  req.phoneme_ids = phonemes;
  req.num_phonemes = 3;
  req.uniform_duration = 5;
  const std::string out = ctx.tmp.path("long.avi");
  req.reference_audio = long_ref.c_str();
  req.tts_checkpoint = tts_ckpt.c_str();
  req.pllm_checkpoint = pllm_ckpt.c_str();
  req.motion_checkpoint = motion_ckpt.c_str();
  req.output_path = out.c_str();
  req.seed = 3;
  REQUIRE_MESSAGE(ada_synthesize(ctx.cfg, &req, nullptr) == ADA_OK,
                  ada_last_error());
  CHECK(fs::exists(out));
}

TEST_CASE("c api: error paths map to status codes") {
  Ctx ctx;
  CHECK(ada_train_tts(ctx.cfg, "/no/such/manifest.jsonl", "/tmp/x.ckpt", nullptr) ==
        ADA_ERR_IO);
  CHECK(std::strlen(ada_last_error()) > 0);

  // synthesize with a missing checkpoint
  const int64_t phonemes[] = {1};
  ada_synth_request req{};
  req.phoneme_ids = phonemes;
  req.num_phonemes = 1;
  req.uniform_duration = 5;
  const std::string ref = ctx.tmp.path("corpus/spk0_utt0.wav");
  const std::string out = ctx.tmp.path("nope.avi");
  const std::string missing = ctx.tmp.path("missing.ckpt");
  req.reference_audio = ref.c_str();
  req.tts_checkpoint = missing.c_str();
  req.pllm_checkpoint = missing.c_str();
  req.motion_checkpoint = missing.c_str();
  req.output_path = out.c_str();
  CHECK(ada_synthesize(ctx.cfg, &req, nullptr) == ADA_ERR_IO);
  CHECK(ada_synthesize(ctx.cfg, nullptr, nullptr) == ADA_ERR_INVALID);

  // config-hash mismatch: train under one geometry, load under another
  const std::string tts_ckpt = ctx.tmp.path("hash.ckpt");
  REQUIRE(ada_train_tts(ctx.cfg, ctx.manifest.c_str(), tts_ckpt.c_str(), nullptr) == ADA_OK);
  ada_config* other = ada_config_create();
  REQUIRE(ada_config_set(other, "tts.d_model", "24") == ADA_OK);
  double score = 0.0;
  CHECK(ada_eval_speaker_similarity(other, tts_ckpt.c_str(), ref.c_str(),
                                    ref.c_str(), &score) == ADA_ERR_INVALID);
  ada_config_free(other);
}
