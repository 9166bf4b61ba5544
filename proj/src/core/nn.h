#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "core/autograd.h"
#include "core/rng.h"
#include "core/serialize.h"
#include "core/tensor.h"

namespace adatta {
namespace nn {

// Named parameter registry. Models register leaf nodes here; the optimizer
// and the checkpoint container both address parameters by name.
class ParamRegistry {
 public:
  ag::Var param(const std::string& name, std::vector<int64_t> shape,
                double init_stddev, Rng& rng);
  ag::Var zeros_param(const std::string& name, std::vector<int64_t> shape);
  ag::Var ones_param(const std::string& name, std::vector<int64_t> shape);

  bool has(const std::string& name) const { return params_.count(name) > 0; }
  ag::Var get(const std::string& name) const;
  const std::map<std::string, ag::NodePtr>& all() const { return params_; }

  void zero_grads();
  int64_t total_size() const;

 private:
  ag::Var insert(const std::string& name, Tensor value);
  std::map<std::string, ag::NodePtr> params_;
};

struct Dense {
  ag::Var w, b;
  Dense() = default;
  Dense(ParamRegistry& reg, const std::string& name, int64_t in, int64_t out,
        Rng& rng, bool zero_init = false);
  ag::Var forward(const ag::Var& x) const;  // x: [T, in]
};

struct Conv1d {
  ag::Var w, b;
  int64_t kernel = 0;
  Conv1d() = default;
  Conv1d(ParamRegistry& reg, const std::string& name, int64_t in, int64_t out,
         int64_t k, Rng& rng, bool zero_init = false);
  ag::Var forward(const ag::Var& x) const;  // x: [T, in] -> [T, out]
};

struct LayerNorm {
  ag::Var gain, bias;
  LayerNorm() = default;
  LayerNorm(ParamRegistry& reg, const std::string& name, int64_t d);
  ag::Var forward(const ag::Var& x) const;
};

struct Embedding {
  ag::Var table;  // [vocab, d]
  Embedding() = default;
  Embedding(ParamRegistry& reg, const std::string& name, int64_t vocab,
            int64_t d, Rng& rng);
  ag::Var forward(const std::vector<int64_t>& ids) const;
};

// Residual conv block: x + LN(act(conv(x))). Keeps frame count.
struct ConvBlock {
  Conv1d conv;
  LayerNorm norm;
  ConvBlock() = default;
  ConvBlock(ParamRegistry& reg, const std::string& name, int64_t d, int64_t k,
            Rng& rng);
  ag::Var forward(const ag::Var& x) const;
};

// Pre-LN transformer block with multi-head causal self-attention.
struct TransformerBlock {
  LayerNorm ln1, ln2;
  Dense wq, wk, wv, wo, ff1, ff2;
  int64_t heads = 1;
  int64_t width = 0;
  TransformerBlock() = default;
  TransformerBlock(ParamRegistry& reg, const std::string& name, int64_t width,
                   int64_t heads, Rng& rng);
  ag::Var forward(const ag::Var& x) const;  // x: [T, width]
};

// Adam with bias correction. Moments are addressable by parameter name so
// they round-trip through checkpoints and resumed runs replay bit-exactly.
class Adam {
 public:
  Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  // updates parameters that have received gradients; a non-empty
  // name_prefix restricts the update to that parameter group
  void step(ParamRegistry& reg, const std::string& name_prefix = "");

  int64_t t() const { return t_; }
  void set_t(int64_t t) { t_ = t; }
  std::map<std::string, Tensor>& m() { return m_; }
  std::map<std::string, Tensor>& v() { return v_; }
  const std::map<std::string, Tensor>& m() const { return m_; }
  const std::map<std::string, Tensor>& v() const { return v_; }
  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }

 private:
  double lr_, beta1_, beta2_, eps_;
  int64_t t_ = 0;
  std::map<std::string, Tensor> m_, v_;
};

// ---- inference-only tensor helpers (no autograd) ----
std::vector<double> softmax(const std::vector<double>& logits);
int64_t argmax(const double* v, int64_t n);

}  // namespace nn

void save_adam_state(Checkpoint& ckpt, const std::string& prefix,
                     const nn::Adam& adam);
void load_adam_state(const Checkpoint& ckpt, const std::string& prefix,
                     nn::Adam& adam);

}  // namespace adatta
