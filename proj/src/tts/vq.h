#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "core/rng.h"
#include "core/tensor.h"

namespace adatta {

struct QuantizeResult {
  int64_t index = -1;
  std::vector<double> vector;  // codebook entry, copied
};

// Vector-quantization codebook with EMA-updated entries and a dead-entry
// reset policy. Entries and usage statistics are plain tensors so they
// serialize through the checkpoint container unchanged.
class Codebook {
 public:
  Codebook(int64_t k, int64_t dim, double init_stddev, Rng& rng);
  Codebook(Tensor entries, Tensor ema_count, Tensor ema_sum, Tensor unused);

  int64_t size() const { return entries_.dim(0); }
  int64_t dim() const { return entries_.dim(1); }

  const Tensor& entries() const { return entries_; }
  const Tensor& ema_count() const { return ema_count_; }
  const Tensor& ema_sum() const { return ema_sum_; }
  const Tensor& unused_steps() const { return unused_; }

  // nearest entry by squared Euclidean distance; ties break to the lowest
  // index. v must hold dim() finite values.
  QuantizeResult quantize(const double* v) const;

  // one EMA step over this batch of assigned vectors; entries with enough
  // accumulated mass move to their EMA mean
  void ema_update(const std::vector<std::vector<double>>& vectors,
                  const std::vector<int64_t>& assignments, double decay);

  // reinitializes entries unused for >= patience consecutive steps to a
  // random vector from the batch; returns the number of resets
  int64_t reset_dead_entries(int64_t patience,
                             const std::vector<std::vector<double>>& vectors,
                             Rng& rng);

  // empirical usage perplexity of the given code ids against this codebook
  static double perplexity(const std::vector<int64_t>& codes);

 private:
  Tensor entries_;    // [K, d]
  Tensor ema_count_;  // [K]
  Tensor ema_sum_;    // [K, d]
  Tensor unused_;     // [K], consecutive unused-step counters
};

// spec-level operation: (index, quantized vector) for a single vector
QuantizeResult quantize(const std::vector<double>& v, const Codebook& cb);

}  // namespace adatta
