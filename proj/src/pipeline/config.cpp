#include "pipeline/config.h"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "core/errors.h"
#include "core/serialize.h"

namespace adatta {

using nlohmann::json;

namespace {

template <typename T>
void maybe(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void parse_train(const json& j, TrainConfig& t) {
  maybe(j, "max_steps", t.max_steps);
  maybe(j, "batch_size", t.batch_size);
  maybe(j, "lr", t.lr);
  maybe(j, "adv_warmup_steps", t.adv_warmup_steps);
  maybe(j, "lambda_adv", t.lambda_adv);
  maybe(j, "beta_commit", t.beta_commit);
  maybe(j, "reset_patience", t.reset_patience);
  maybe(j, "seed", t.seed);
  maybe(j, "strict", t.strict);
}

void parse_into(const json& root, PipelineConfig& cfg) {
  if (root.contains("features")) {
    const json& j = root.at("features");
    maybe(j, "sample_rate", cfg.features.sample_rate);
    maybe(j, "n_fft", cfg.features.n_fft);
    maybe(j, "hop_length", cfg.features.hop_length);
    maybe(j, "n_mels", cfg.features.n_mels);
    maybe(j, "fmin", cfg.features.fmin);
    maybe(j, "fmax", cfg.features.fmax);
    maybe(j, "log_floor", cfg.features.log_floor);
    maybe(j, "pitch_fmin", cfg.features.pitch_fmin);
    maybe(j, "pitch_fmax", cfg.features.pitch_fmax);
    maybe(j, "pitch_voicing_threshold", cfg.features.pitch_voicing_threshold);
    maybe(j, "align_tolerance", cfg.features.align_tolerance);
    maybe(j, "griffin_lim_iters", cfg.features.griffin_lim_iters);
    maybe(j, "griffin_lim_seed", cfg.features.griffin_lim_seed);
  }
  if (root.contains("tts")) {
    const json& j = root.at("tts");
    maybe(j, "d_model", cfg.tts.d_model);
    maybe(j, "d_timbre", cfg.tts.d_timbre);
    maybe(j, "d_code", cfg.tts.d_code);
    maybe(j, "codebook_size", cfg.tts.codebook_size);
    maybe(j, "phoneme_vocab", cfg.tts.phoneme_vocab);
    maybe(j, "conv_kernel", cfg.tts.conv_kernel);
    maybe(j, "encoder_blocks", cfg.tts.encoder_blocks);
    maybe(j, "decoder_blocks", cfg.tts.decoder_blocks);
    maybe(j, "disc_hidden", cfg.tts.disc_hidden);
    maybe(j, "disc_window", cfg.tts.disc_window);
    maybe(j, "adv_updates_timbre", cfg.tts.adv_updates_timbre);
    if (j.contains("train")) {
      parse_train(j.at("train"), cfg.tts.train);
      // accepted under train as well, next to the other VQ training knobs
      maybe(j.at("train"), "codebook_size", cfg.tts.codebook_size);
    }
  }
  if (root.contains("pllm")) {
    const json& j = root.at("pllm");
    maybe(j, "layers", cfg.pllm.layers);
    maybe(j, "heads", cfg.pllm.heads);
    maybe(j, "width", cfg.pllm.width);
    maybe(j, "prompt_span_frames", cfg.pllm.prompt_span_frames);
    if (j.contains("train")) parse_train(j.at("train"), cfg.pllm.train);
    if (j.contains("sampling")) {
      const json& s = j.at("sampling");
      maybe(s, "temperature", cfg.pllm.sampling.temperature);
      maybe(s, "top_k", cfg.pllm.sampling.top_k);
      maybe(s, "seed", cfg.pllm.sampling.seed);
    }
  }
  if (root.contains("motion")) {
    const json& j = root.at("motion");
    maybe(j, "d_feat", cfg.motion.d_feat);
    maybe(j, "d_latent", cfg.motion.d_latent);
    maybe(j, "hidden", cfg.motion.hidden);
    maybe(j, "encoder_blocks", cfg.motion.encoder_blocks);
    maybe(j, "decoder_blocks", cfg.motion.decoder_blocks);
    maybe(j, "lambda_kl", cfg.motion.lambda_kl);
    maybe(j, "kl_warmup_steps", cfg.motion.kl_warmup_steps);
    maybe(j, "postnet_steps", cfg.motion.postnet_steps);
    if (j.contains("train")) parse_train(j.at("train"), cfg.motion.train);
  }
  if (root.contains("render")) {
    const json& j = root.at("render");
    maybe(j, "width", cfg.render.width);
    maybe(j, "height", cfg.render.height);
    maybe(j, "fps", cfg.render.fps);
    maybe(j, "point_radius", cfg.render.point_radius);
  }
}

}  // namespace

void PipelineConfig::validate() const {
  features.validate();
  if (tts.d_model < 1 || tts.d_timbre < 1 || tts.d_code < 1)
    throw InvalidInput("tts: model dims must be positive");
  if (tts.codebook_size < 2)
    throw InvalidInput("tts: codebook_size must be >= 2");
  if (tts.phoneme_vocab < 2)
    throw InvalidInput("tts: phoneme_vocab must be >= 2");
  if (tts.conv_kernel % 2 == 0)
    throw InvalidInput("tts: conv_kernel must be odd");
  if (pllm.width % pllm.heads != 0)
    throw InvalidInput("pllm: width must be divisible by heads");
  if (pllm.prompt_span_frames < 1)
    throw InvalidInput("pllm: prompt_span_frames must be >= 1");
  if (motion.d_feat < 1 || motion.d_latent < 1 || motion.hidden < 1)
    throw InvalidInput("motion: dims must be positive");
  if (render.fps <= 0) throw InvalidInput("render: fps must be > 0");
  if (render.width < 64 || render.height < 64)
    throw InvalidInput("render: canvas must be at least 64x64");
}

PipelineConfig default_config() { return PipelineConfig{}; }

void overlay_config_file(PipelineConfig& cfg, const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config file: " + path);
  json root;
  try {
    f >> root;
  } catch (const std::exception& e) {
    throw InvalidInput("config parse error in " + path + ": " + e.what());
  }
  parse_into(root, cfg);
}

PipelineConfig load_config_file(const std::string& path) {
  PipelineConfig cfg = default_config();
  overlay_config_file(cfg, path);
  cfg.validate();
  return cfg;
}

void apply_override(PipelineConfig& cfg, const std::string& dotted_key,
                    const std::string& value) {
  // rebuild a one-leaf JSON document and run it through the same parser
  json leaf;
  try {
    leaf = json::parse(value);
  } catch (...) {
    leaf = value;  // plain string
  }
  json root;
  json* cursor = &root;
  size_t start = 0;
  while (true) {
    const size_t dot = dotted_key.find('.', start);
    if (dot == std::string::npos) {
      (*cursor)[dotted_key.substr(start)] = leaf;
      break;
    }
    cursor = &(*cursor)[dotted_key.substr(start, dot - start)];
    start = dot + 1;
  }
  parse_into(root, cfg);
}

std::string canonical_config_text(const PipelineConfig& cfg,
                                  const std::string& kind) {
  std::ostringstream os;
  const FeatureConfig& f = cfg.features;
  os << "features:sample_rate=" << f.sample_rate << ",n_fft=" << f.n_fft
     << ",hop_length=" << f.hop_length << ",n_mels=" << f.n_mels
     << ",fmin=" << f.fmin << ",fmax=" << f.fmax << ",log_floor=" << f.log_floor
     << ";";
  if (kind == "tts") {
    os << "tts:d_model=" << cfg.tts.d_model << ",d_timbre=" << cfg.tts.d_timbre
       << ",d_code=" << cfg.tts.d_code << ",K=" << cfg.tts.codebook_size
       << ",vocab=" << cfg.tts.phoneme_vocab << ",k=" << cfg.tts.conv_kernel
       << ",enc=" << cfg.tts.encoder_blocks << ",dec=" << cfg.tts.decoder_blocks
       << ";";
  } else if (kind == "pllm") {
    os << "pllm:layers=" << cfg.pllm.layers << ",heads=" << cfg.pllm.heads
       << ",width=" << cfg.pllm.width << ",d_model=" << cfg.tts.d_model
       << ",K=" << cfg.tts.codebook_size << ";";
  } else if (kind == "motion") {
    os << "motion:d_feat=" << cfg.motion.d_feat
       << ",d_latent=" << cfg.motion.d_latent << ",hidden=" << cfg.motion.hidden
       << ",enc=" << cfg.motion.encoder_blocks
       << ",dec=" << cfg.motion.decoder_blocks << ";";
  } else {
    throw InvalidInput("unknown checkpoint kind: " + kind);
  }
  return os.str();
}

uint64_t config_hash(const PipelineConfig& cfg, const std::string& kind) {
  return fnv1a64(canonical_config_text(cfg, kind));
}

}  // namespace adatta
