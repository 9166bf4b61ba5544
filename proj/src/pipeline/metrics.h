#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "core/tensor.h"
#include "pipeline/config.h"
#include "pipeline/manifest.h"
#include "tts/model.h"
#include "tts/train.h"

namespace adatta {

// cosine similarity between two timbre vectors, in [-1, 1]
double eval_speaker_similarity(const Tensor& a, const Tensor& b);

// exp of the Shannon entropy of the empirical code distribution, in [1, K]
double codebook_perplexity(const std::vector<int64_t>& codes);

struct DisentanglementReport {
  double timbre_accuracy = 0.0;
  double prosody_accuracy = 0.0;
  double gap = 0.0;  // timbre_accuracy - prosody_accuracy
  int64_t train_items = 0;
  int64_t test_items = 0;
};

// Trains two small linear speaker classifiers on a held-out split: one over
// timbre vectors, one over pooled one-hot prosody code histograms. A healthy
// bottleneck keeps speaker identity out of the prosody codes, so the timbre
// probe should win.
DisentanglementReport disentanglement_probe(const PipelineConfig& cfg,
                                            const CorpusManifest& corpus,
                                            const TtsModel& tts,
                                            FeatureCache& features);

// linear softmax probe used by the report; exposed for the random-label
// baseline test
double linear_probe_accuracy(const std::vector<std::vector<double>>& train_x,
                             const std::vector<int64_t>& train_y,
                             const std::vector<std::vector<double>>& test_x,
                             const std::vector<int64_t>& test_y,
                             int64_t num_classes, uint64_t seed);

}  // namespace adatta
