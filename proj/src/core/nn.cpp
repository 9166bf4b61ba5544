#include "core/nn.h"

#include <cmath>

#include "core/errors.h"

namespace adatta {
namespace nn {

ag::Var ParamRegistry::insert(const std::string& name, Tensor value) {
  if (params_.count(name)) {
    throw InvalidInput("duplicate parameter name: " + name);
  }
  auto v = ag::Var::leaf(std::move(value), /*requires_grad=*/true);
  params_[name] = v.node();
  return v;
}

ag::Var ParamRegistry::param(const std::string& name,
                             std::vector<int64_t> shape, double init_stddev,
                             Rng& rng) {
  return insert(name, Tensor::randn(std::move(shape), init_stddev, rng));
}

ag::Var ParamRegistry::zeros_param(const std::string& name,
                                   std::vector<int64_t> shape) {
  return insert(name, Tensor::zeros(std::move(shape)));
}

ag::Var ParamRegistry::ones_param(const std::string& name,
                                  std::vector<int64_t> shape) {
  return insert(name, Tensor::full(std::move(shape), 1.0));
}

ag::Var ParamRegistry::get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw InvalidInput("unknown parameter: " + name);
  return ag::Var(it->second);
}

void ParamRegistry::zero_grads() {
  for (auto& [name, node] : params_) {
    if (node->grad_alloc) node->grad.fill(0.0);
  }
}

int64_t ParamRegistry::total_size() const {
  int64_t n = 0;
  for (const auto& [name, node] : params_) n += node->value.numel();
  return n;
}

Dense::Dense(ParamRegistry& reg, const std::string& name, int64_t in,
             int64_t out, Rng& rng, bool zero_init) {
  const double stddev = zero_init ? 0.0 : 1.0 / std::sqrt(static_cast<double>(in));
  w = reg.param(name + ".w", {in, out}, stddev, rng);
  b = reg.zeros_param(name + ".b", {out});
}

ag::Var Dense::forward(const ag::Var& x) const {
  return ag::add_rowvec(ag::matmul(x, w), b);
}

Conv1d::Conv1d(ParamRegistry& reg, const std::string& name, int64_t in,
               int64_t out, int64_t k, Rng& rng, bool zero_init)
    : kernel(k) {
  const double stddev =
      zero_init ? 0.0 : 1.0 / std::sqrt(static_cast<double>(in * k));
  w = reg.param(name + ".w", {out, in, k}, stddev, rng);
  b = reg.zeros_param(name + ".b", {out});
}

ag::Var Conv1d::forward(const ag::Var& x) const {
  return ag::conv1d_same(x, w, b);
}

LayerNorm::LayerNorm(ParamRegistry& reg, const std::string& name, int64_t d) {
  gain = reg.ones_param(name + ".g", {d});
  bias = reg.zeros_param(name + ".b", {d});
}

ag::Var LayerNorm::forward(const ag::Var& x) const {
  return ag::layer_norm(x, gain, bias);
}

Embedding::Embedding(ParamRegistry& reg, const std::string& name, int64_t vocab,
                     int64_t d, Rng& rng) {
  table = reg.param(name + ".table", {vocab, d}, 0.02, rng);
}

ag::Var Embedding::forward(const std::vector<int64_t>& ids) const {
  return ag::gather_rows(table, ids);
}

ConvBlock::ConvBlock(ParamRegistry& reg, const std::string& name, int64_t d,
                     int64_t k, Rng& rng)
    : conv(reg, name + ".conv", d, d, k, rng), norm(reg, name + ".ln", d) {}

ag::Var ConvBlock::forward(const ag::Var& x) const {
  return ag::add(x, norm.forward(ag::relu(conv.forward(x))));
}

TransformerBlock::TransformerBlock(ParamRegistry& reg, const std::string& name,
                                   int64_t width, int64_t heads, Rng& rng)
    : ln1(reg, name + ".ln1", width),
      ln2(reg, name + ".ln2", width),
      wq(reg, name + ".wq", width, width, rng),
      wk(reg, name + ".wk", width, width, rng),
      wv(reg, name + ".wv", width, width, rng),
      wo(reg, name + ".wo", width, width, rng),
      ff1(reg, name + ".ff1", width, width * 4, rng),
      ff2(reg, name + ".ff2", width * 4, width, rng),
      heads(heads),
      width(width) {
  if (width % heads != 0) throw InvalidInput("width must divide by heads");
}

ag::Var TransformerBlock::forward(const ag::Var& x) const {
  const int64_t dh = width / heads;
  ag::Var h = ln1.forward(x);
  ag::Var q = wq.forward(h), k = wk.forward(h), v = wv.forward(h);
  ag::Var attn_cat;
  for (int64_t hd = 0; hd < heads; ++hd) {
    ag::Var qa = ag::slice_cols(q, hd * dh, (hd + 1) * dh);
    ag::Var ka = ag::slice_cols(k, hd * dh, (hd + 1) * dh);
    ag::Var va = ag::slice_cols(v, hd * dh, (hd + 1) * dh);
    ag::Var o = ag::causal_attention(qa, ka, va);
    attn_cat = hd == 0 ? o : ag::concat_cols(attn_cat, o);
  }
  ag::Var x1 = ag::add(x, wo.forward(attn_cat));
  ag::Var h2 = ln2.forward(x1);
  ag::Var ff = ff2.forward(ag::relu(ff1.forward(h2)));
  return ag::add(x1, ff);
}

void Adam::step(ParamRegistry& reg, const std::string& name_prefix) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (auto& [name, node] : reg.all()) {
    if (!node->grad_alloc) continue;
    if (!name_prefix.empty() && name.rfind(name_prefix, 0) != 0) continue;
    auto mit = m_.find(name);
    if (mit == m_.end()) {
      mit = m_.emplace(name, Tensor::zeros(node->value.shape())).first;
      v_.emplace(name, Tensor::zeros(node->value.shape()));
    }
    Tensor& m = mit->second;
    Tensor& v = v_[name];
    Tensor& val = node->value;
    const Tensor& g = node->grad;
    for (int64_t i = 0; i < val.numel(); ++i) {
      m.at(i) = beta1_ * m.at(i) + (1.0 - beta1_) * g.at(i);
      v.at(i) = beta2_ * v.at(i) + (1.0 - beta2_) * g.at(i) * g.at(i);
      const double mhat = m.at(i) / bc1;
      const double vhat = v.at(i) / bc2;
      val.at(i) -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

std::vector<double> softmax(const std::vector<double>& logits) {
  std::vector<double> out(logits.size());
  double maxv = logits[0];
  for (double v : logits) maxv = std::max(maxv, v);
  double denom = 0.0;
  for (size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - maxv);
    denom += out[i];
  }
  for (auto& v : out) v /= denom;
  return out;
}

int64_t argmax(const double* v, int64_t n) {
  int64_t best = 0;
  for (int64_t i = 1; i < n; ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

}  // namespace nn

void save_adam_state(Checkpoint& ckpt, const std::string& prefix,
                     const nn::Adam& adam) {
  for (const auto& [name, t] : adam.m()) ckpt.tensors[prefix + ".m." + name] = t;
  for (const auto& [name, t] : adam.v()) ckpt.tensors[prefix + ".v." + name] = t;
  ckpt.put_scalar(prefix + ".t", static_cast<double>(adam.t()));
}

void load_adam_state(const Checkpoint& ckpt, const std::string& prefix,
                     nn::Adam& adam) {
  adam.m().clear();
  adam.v().clear();
  const std::string mp = prefix + ".m.";
  const std::string vp = prefix + ".v.";
  for (const auto& [name, t] : ckpt.tensors) {
    if (name.rfind(mp, 0) == 0) adam.m()[name.substr(mp.size())] = t;
    if (name.rfind(vp, 0) == 0) adam.v()[name.substr(vp.size())] = t;
  }
  adam.set_t(static_cast<int64_t>(ckpt.scalar(prefix + ".t")));
}

}  // namespace adatta
