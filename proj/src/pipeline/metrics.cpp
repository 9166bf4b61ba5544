#include "pipeline/metrics.h"

#include <algorithm>
#include <cmath>
#include <map>

#include "core/autograd.h"
#include "core/errors.h"
#include "core/nn.h"

namespace adatta {

double eval_speaker_similarity(const Tensor& a, const Tensor& b) {
  if (a.numel() != b.numel() || a.numel() == 0)
    throw InvalidInput("speaker similarity: dimension mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) {
    dot += a.at(i) * b.at(i);
    na += a.at(i) * a.at(i);
    nb += b.at(i) * b.at(i);
  }
  if (na <= 0.0 || nb <= 0.0)
    throw InvalidInput("speaker similarity: zero-norm vector");
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

double codebook_perplexity(const std::vector<int64_t>& codes) {
  return Codebook::perplexity(codes);
}

double linear_probe_accuracy(const std::vector<std::vector<double>>& train_x,
                             const std::vector<int64_t>& train_y,
                             const std::vector<std::vector<double>>& test_x,
                             const std::vector<int64_t>& test_y,
                             int64_t num_classes, uint64_t seed) {
  if (train_x.empty() || test_x.empty())
    throw InvalidInput("probe: empty split");
  const int64_t dim = static_cast<int64_t>(train_x[0].size());
  const int64_t n = static_cast<int64_t>(train_x.size());

  // standardize features on the training split
  std::vector<double> mean(static_cast<size_t>(dim), 0.0);
  std::vector<double> sd(static_cast<size_t>(dim), 0.0);
  for (const auto& row : train_x)
    for (int64_t c = 0; c < dim; ++c) mean[static_cast<size_t>(c)] += row[static_cast<size_t>(c)];
  for (auto& v : mean) v /= static_cast<double>(n);
  for (const auto& row : train_x)
    for (int64_t c = 0; c < dim; ++c) {
      const double d = row[static_cast<size_t>(c)] - mean[static_cast<size_t>(c)];
      sd[static_cast<size_t>(c)] += d * d;
    }
  for (auto& v : sd) v = std::sqrt(v / static_cast<double>(n)) + 1e-6;
  auto standardized = [&](const std::vector<std::vector<double>>& rows) {
    Tensor x({static_cast<int64_t>(rows.size()), dim});
    for (size_t r = 0; r < rows.size(); ++r)
      for (int64_t c = 0; c < dim; ++c)
        x.at(static_cast<int64_t>(r), c) =
            (rows[r][static_cast<size_t>(c)] - mean[static_cast<size_t>(c)]) /
            sd[static_cast<size_t>(c)];
    return x;
  };
  const Tensor train_mat = standardized(train_x);
  const Tensor test_mat = standardized(test_x);

  nn::ParamRegistry reg;
  Rng rng(mix_seed(seed, 0x9287ULL));
  nn::Dense probe(reg, "probe", dim, num_classes, rng);
  nn::Adam adam(0.05);
  for (int iter = 0; iter < 300; ++iter) {
    ag::Var logits = probe.forward(ag::Var::constant(train_mat));
    ag::Var loss = ag::softmax_cross_entropy(logits, train_y);
    reg.zero_grads();
    ag::backward(loss);
    adam.step(reg);
  }
  const Tensor logits = probe.forward(ag::Var::constant(test_mat)).value();
  int64_t correct = 0;
  for (int64_t r = 0; r < logits.rows(); ++r) {
    const int64_t pred = nn::argmax(logits.data() + r * num_classes, num_classes);
    if (pred == test_y[static_cast<size_t>(r)]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(logits.rows());
}

DisentanglementReport disentanglement_probe(const PipelineConfig& cfg,
                                            const CorpusManifest& corpus,
                                            const TtsModel& tts,
                                            FeatureCache& features) {
  const std::vector<std::string> speakers = corpus.speaker_ids();
  if (speakers.size() < 2)
    throw InvalidInput("disentanglement probe: need at least 2 speakers");
  std::map<std::string, int64_t> speaker_index;
  for (size_t i = 0; i < speakers.size(); ++i)
    speaker_index[speakers[i]] = static_cast<int64_t>(i);

  std::vector<std::vector<double>> timbre_train, timbre_test;
  std::vector<std::vector<double>> code_train, code_test;
  std::vector<int64_t> y_train, y_test;
  const int64_t k = cfg.tts.codebook_size;

  // alternate train/test within each speaker's utterance list
  for (const auto& spk : speakers) {
    const std::vector<size_t> utts = corpus.utterances_of(spk);
    for (size_t j = 0; j < utts.size(); ++j) {
      const UtteranceFeatures& uf = features.get(utts[j]);
      const Tensor timbre = tts.encode_timbre(uf.mel);
      std::vector<double> tv(timbre.data(), timbre.data() + timbre.numel());
      const ProsodyEncoding enc = tts.encode_prosody(uf.bands, uf.align);
      std::vector<double> hist(static_cast<size_t>(k), 0.0);
      for (int64_t c : enc.codes)
        hist[static_cast<size_t>(c)] += 1.0 / static_cast<double>(enc.codes.size());
      const int64_t label = speaker_index[spk];
      if (j % 2 == 0) {
        timbre_train.push_back(std::move(tv));
        code_train.push_back(std::move(hist));
        y_train.push_back(label);
      } else {
        timbre_test.push_back(std::move(tv));
        code_test.push_back(std::move(hist));
        y_test.push_back(label);
      }
    }
  }
  if (timbre_test.empty())
    throw InvalidInput("disentanglement probe: need >= 2 utterances per speaker");

  DisentanglementReport rep;
  rep.train_items = static_cast<int64_t>(y_train.size());
  rep.test_items = static_cast<int64_t>(y_test.size());
  rep.timbre_accuracy = linear_probe_accuracy(
      timbre_train, y_train, timbre_test, y_test,
      static_cast<int64_t>(speakers.size()), 11);
  rep.prosody_accuracy = linear_probe_accuracy(
      code_train, y_train, code_test, y_test,
      static_cast<int64_t>(speakers.size()), 12);
  rep.gap = rep.timbre_accuracy - rep.prosody_accuracy;
  return rep;
}

}  // namespace adatta
