#include "tts/vq.h"

#include <cmath>
#include <map>

#include "core/errors.h"

namespace adatta {

Codebook::Codebook(int64_t k, int64_t dim, double init_stddev, Rng& rng)
    : entries_(Tensor::randn({k, dim}, init_stddev, rng)),
      ema_count_(Tensor::zeros({k})),
      ema_sum_(Tensor::zeros({k, dim})),
      unused_(Tensor::zeros({k})) {
  if (k < 2) throw InvalidInput("codebook: need at least 2 entries");
}

Codebook::Codebook(Tensor entries, Tensor ema_count, Tensor ema_sum,
                   Tensor unused)
    : entries_(std::move(entries)),
      ema_count_(std::move(ema_count)),
      ema_sum_(std::move(ema_sum)),
      unused_(std::move(unused)) {
  if (entries_.ndim() != 2 || entries_.dim(0) < 2)
    throw InvalidInput("codebook: bad entries tensor");
}

QuantizeResult Codebook::quantize(const double* v) const {
  const int64_t k = size(), d = dim();
  for (int64_t c = 0; c < d; ++c) {
    if (!std::isfinite(v[c]))
      throw InvalidInput("quantize: non-finite input vector");
  }
  int64_t best = 0;
  double best_dist = 0.0;
  for (int64_t i = 0; i < k; ++i) {
    double dist = 0.0;
    for (int64_t c = 0; c < d; ++c) {
      const double dv = v[c] - entries_.at(i, c);
      dist += dv * dv;
    }
    if (i == 0 || dist < best_dist) {  // strict <: ties keep the lowest index
      best = i;
      best_dist = dist;
    }
  }
  QuantizeResult res;
  res.index = best;
  res.vector.resize(static_cast<size_t>(d));
  for (int64_t c = 0; c < d; ++c) res.vector[static_cast<size_t>(c)] = entries_.at(best, c);
  return res;
}

void Codebook::ema_update(const std::vector<std::vector<double>>& vectors,
                          const std::vector<int64_t>& assignments,
                          double decay) {
  const int64_t k = size(), d = dim();
  std::vector<double> n(static_cast<size_t>(k), 0.0);
  std::vector<double> s(static_cast<size_t>(k * d), 0.0);
  for (size_t i = 0; i < vectors.size(); ++i) {
    const int64_t a = assignments[i];
    n[static_cast<size_t>(a)] += 1.0;
    for (int64_t c = 0; c < d; ++c)
      s[static_cast<size_t>(a * d + c)] += vectors[i][static_cast<size_t>(c)];
  }
  for (int64_t i = 0; i < k; ++i) {
    ema_count_.at(i) = decay * ema_count_.at(i) + (1.0 - decay) * n[static_cast<size_t>(i)];
    for (int64_t c = 0; c < d; ++c) {
      ema_sum_.at(i, c) =
          decay * ema_sum_.at(i, c) + (1.0 - decay) * s[static_cast<size_t>(i * d + c)];
    }
    if (ema_count_.at(i) > 1e-5) {
      for (int64_t c = 0; c < d; ++c)
        entries_.at(i, c) = ema_sum_.at(i, c) / ema_count_.at(i);
    }
    if (n[static_cast<size_t>(i)] > 0.0) {
      unused_.at(i) = 0.0;
    } else {
      unused_.at(i) += 1.0;
    }
  }
}

int64_t Codebook::reset_dead_entries(
    int64_t patience, const std::vector<std::vector<double>>& vectors,
    Rng& rng) {
  if (vectors.empty() || patience <= 0) return 0;
  const int64_t k = size(), d = dim();
  int64_t resets = 0;
  for (int64_t i = 0; i < k; ++i) {
    if (unused_.at(i) < static_cast<double>(patience)) continue;
    const auto& src = vectors[static_cast<size_t>(rng.uniform_int(
        static_cast<int64_t>(vectors.size())))];
    for (int64_t c = 0; c < d; ++c) {
      const double jitter = 0.01 * rng.normal();
      entries_.at(i, c) = src[static_cast<size_t>(c)] + jitter;
      ema_sum_.at(i, c) = entries_.at(i, c);
    }
    ema_count_.at(i) = 1.0;
    unused_.at(i) = 0.0;
    ++resets;
  }
  return resets;
}

double Codebook::perplexity(const std::vector<int64_t>& codes) {
  if (codes.empty()) throw InvalidInput("perplexity: empty code sequence");
  std::map<int64_t, int64_t> counts;
  for (int64_t c : codes) ++counts[c];
  const double total = static_cast<double>(codes.size());
  double entropy = 0.0;
  for (const auto& [code, n] : counts) {
    const double p = static_cast<double>(n) / total;
    entropy -= p * std::log(p);
  }
  return std::exp(entropy);
}

QuantizeResult quantize(const std::vector<double>& v, const Codebook& cb) {
  if (static_cast<int64_t>(v.size()) != cb.dim())
    throw InvalidInput("quantize: dimension mismatch");
  return cb.quantize(v.data());
}

}  // namespace adatta
