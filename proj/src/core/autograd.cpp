#include "core/autograd.h"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "core/errors.h"

namespace adatta {
namespace ag {

namespace {

NodePtr make_node(Tensor value, std::vector<NodePtr> parents,
                  std::function<void(Node&)> bwd) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->parents = std::move(parents);
  for (const auto& p : n->parents) {
    if (p->requires_grad) {
      n->requires_grad = true;
      break;
    }
  }
  if (n->requires_grad) n->backward_fn = std::move(bwd);
  return n;
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (!a.value().same_shape(b.value())) {
    throw InvalidInput(std::string(op) + ": shape mismatch " +
                       a.value().shape_str() + " vs " + b.value().shape_str());
  }
}

}  // namespace

Var Var::leaf(Tensor value, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  return Var(n);
}

Var add(const Var& a, const Var& b) {
  check_same_shape(a, b, "add");
  Tensor out = a.value();
  const double* bv = b.value().data();
  for (int64_t i = 0; i < out.numel(); ++i) out.at(i) += bv[i];
  return Var(make_node(std::move(out), {a.node(), b.node()}, [](Node& self) {
    const Tensor& g = self.grad;
    for (int s = 0; s < 2; ++s) {
      Node& p = *self.parents[s];
      if (!p.requires_grad) continue;
      Tensor& pg = p.ensure_grad();
      for (int64_t i = 0; i < g.numel(); ++i) pg.at(i) += g.at(i);
    }
  }));
}

Var sub(const Var& a, const Var& b) {
  check_same_shape(a, b, "sub");
  Tensor out = a.value();
  const double* bv = b.value().data();
  for (int64_t i = 0; i < out.numel(); ++i) out.at(i) -= bv[i];
  return Var(make_node(std::move(out), {a.node(), b.node()}, [](Node& self) {
    const Tensor& g = self.grad;
    if (self.parents[0]->requires_grad) {
      Tensor& pg = self.parents[0]->ensure_grad();
      for (int64_t i = 0; i < g.numel(); ++i) pg.at(i) += g.at(i);
    }
    if (self.parents[1]->requires_grad) {
      Tensor& pg = self.parents[1]->ensure_grad();
      for (int64_t i = 0; i < g.numel(); ++i) pg.at(i) -= g.at(i);
    }
  }));
}

Var mul(const Var& a, const Var& b) {
  check_same_shape(a, b, "mul");
  Tensor out = a.value();
  const double* bv = b.value().data();
  for (int64_t i = 0; i < out.numel(); ++i) out.at(i) *= bv[i];
  return Var(make_node(std::move(out), {a.node(), b.node()}, [](Node& self) {
    const Tensor& g = self.grad;
    const Tensor& av = self.parents[0]->value;
    const Tensor& bv2 = self.parents[1]->value;
    if (self.parents[0]->requires_grad) {
      Tensor& pg = self.parents[0]->ensure_grad();
      for (int64_t i = 0; i < g.numel(); ++i) pg.at(i) += g.at(i) * bv2.at(i);
    }
    if (self.parents[1]->requires_grad) {
      Tensor& pg = self.parents[1]->ensure_grad();
      for (int64_t i = 0; i < g.numel(); ++i) pg.at(i) += g.at(i) * av.at(i);
    }
  }));
}

Var add_scalar(const Var& a, double c) {
  Tensor out = a.value();
  for (int64_t i = 0; i < out.numel(); ++i) out.at(i) += c;
  return Var(make_node(std::move(out), {a.node()}, [](Node& self) {
    Tensor& pg = self.parents[0]->ensure_grad();
    for (int64_t i = 0; i < self.grad.numel(); ++i) pg.at(i) += self.grad.at(i);
  }));
}

Var mul_scalar(const Var& a, double c) {
  Tensor out = a.value();
  for (int64_t i = 0; i < out.numel(); ++i) out.at(i) *= c;
  return Var(make_node(std::move(out), {a.node()}, [c](Node& self) {
    Tensor& pg = self.parents[0]->ensure_grad();
    for (int64_t i = 0; i < self.grad.numel(); ++i)
      pg.at(i) += self.grad.at(i) * c;
  }));
}

Var square(const Var& a) { return mul(a, a); }

Var exp_op(const Var& a) {
  Tensor out = a.value();
  for (int64_t i = 0; i < out.numel(); ++i) out.at(i) = std::exp(out.at(i));
  Tensor saved = out;
  return Var(make_node(std::move(out), {a.node()}, [saved](Node& self) {
    Tensor& pg = self.parents[0]->ensure_grad();
    for (int64_t i = 0; i < self.grad.numel(); ++i)
      pg.at(i) += self.grad.at(i) * saved.at(i);
  }));
}

Var relu(const Var& a) {
  Tensor out = a.value();
  for (int64_t i = 0; i < out.numel(); ++i)
    if (out.at(i) < 0.0) out.at(i) = 0.0;
  return Var(make_node(std::move(out), {a.node()}, [](Node& self) {
    const Tensor& x = self.parents[0]->value;
    Tensor& pg = self.parents[0]->ensure_grad();
    for (int64_t i = 0; i < self.grad.numel(); ++i)
      if (x.at(i) > 0.0) pg.at(i) += self.grad.at(i);
  }));
}

Var leaky_relu(const Var& a, double alpha) {
  Tensor out = a.value();
  for (int64_t i = 0; i < out.numel(); ++i)
    if (out.at(i) < 0.0) out.at(i) *= alpha;
  return Var(make_node(std::move(out), {a.node()}, [alpha](Node& self) {
    const Tensor& x = self.parents[0]->value;
    Tensor& pg = self.parents[0]->ensure_grad();
    for (int64_t i = 0; i < self.grad.numel(); ++i)
      pg.at(i) += self.grad.at(i) * (x.at(i) > 0.0 ? 1.0 : alpha);
  }));
}

Var tanh_op(const Var& a) {
  Tensor out = a.value();
  for (int64_t i = 0; i < out.numel(); ++i) out.at(i) = std::tanh(out.at(i));
  Tensor saved = out;
  return Var(make_node(std::move(out), {a.node()}, [saved](Node& self) {
    Tensor& pg = self.parents[0]->ensure_grad();
    for (int64_t i = 0; i < self.grad.numel(); ++i)
      pg.at(i) += self.grad.at(i) * (1.0 - saved.at(i) * saved.at(i));
  }));
}

Var clamp_op(const Var& a, double lo, double hi) {
  Tensor out = a.value();
  for (int64_t i = 0; i < out.numel(); ++i)
    out.at(i) = std::min(hi, std::max(lo, out.at(i)));
  return Var(make_node(std::move(out), {a.node()}, [lo, hi](Node& self) {
    const Tensor& x = self.parents[0]->value;
    Tensor& pg = self.parents[0]->ensure_grad();
    for (int64_t i = 0; i < self.grad.numel(); ++i)
      if (x.at(i) >= lo && x.at(i) <= hi) pg.at(i) += self.grad.at(i);
  }));
}

Var matmul(const Var& a, const Var& b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.ndim() != 2 || bv.ndim() != 2 || av.dim(1) != bv.dim(0)) {
    throw InvalidInput("matmul: incompatible shapes " + av.shape_str() + " x " +
                       bv.shape_str());
  }
  const int64_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
  Tensor out({m, n});
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t l = 0; l < k; ++l) {
      const double aval = av.at(i, l);
      if (aval == 0.0) continue;
      for (int64_t j = 0; j < n; ++j) out.at(i, j) += aval * bv.at(l, j);
    }
  }
  return Var(make_node(std::move(out), {a.node(), b.node()}, [m, k, n](Node& self) {
    const Tensor& g = self.grad;
    const Tensor& av2 = self.parents[0]->value;
    const Tensor& bv2 = self.parents[1]->value;
    if (self.parents[0]->requires_grad) {
      Tensor& ga = self.parents[0]->ensure_grad();  // dA = dY * B^T
      for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) {
          const double gv = g.at(i, j);
          if (gv == 0.0) continue;
          for (int64_t l = 0; l < k; ++l) ga.at(i, l) += gv * bv2.at(l, j);
        }
    }
    if (self.parents[1]->requires_grad) {
      Tensor& gb = self.parents[1]->ensure_grad();  // dB = A^T * dY
      for (int64_t i = 0; i < m; ++i)
        for (int64_t l = 0; l < k; ++l) {
          const double aval = av2.at(i, l);
          if (aval == 0.0) continue;
          for (int64_t j = 0; j < n; ++j) gb.at(l, j) += aval * g.at(i, j);
        }
    }
  }));
}

Var add_rowvec(const Var& m, const Var& v) {
  const Tensor& mv = m.value();
  const Tensor& vv = v.value();
  const int64_t rows = mv.dim(0), cols = mv.dim(1);
  if (vv.numel() != cols) {
    throw InvalidInput("add_rowvec: vector length mismatch");
  }
  Tensor out = mv;
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t c = 0; c < cols; ++c) out.at(r, c) += vv.at(c);
  return Var(make_node(std::move(out), {m.node(), v.node()},
                       [rows, cols](Node& self) {
    const Tensor& g = self.grad;
    if (self.parents[0]->requires_grad) {
      Tensor& gm = self.parents[0]->ensure_grad();
      for (int64_t i = 0; i < g.numel(); ++i) gm.at(i) += g.at(i);
    }
    if (self.parents[1]->requires_grad) {
      Tensor& gv = self.parents[1]->ensure_grad();
      for (int64_t r = 0; r < rows; ++r)
        for (int64_t c = 0; c < cols; ++c) gv.at(c) += g.at(r, c);
    }
  }));
}

Var conv1d_same(const Var& x, const Var& w, const Var& b) {
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  const Tensor& bv = b.value();
  if (xv.ndim() != 2 || wv.ndim() != 3) {
    throw InvalidInput("conv1d_same: expects x [T,Cin], w [Cout,Cin,k]");
  }
  const int64_t t_len = xv.dim(0), cin = xv.dim(1);
  const int64_t cout = wv.dim(0), k = wv.dim(2);
  if (wv.dim(1) != cin || bv.numel() != cout || k % 2 == 0) {
    throw InvalidInput("conv1d_same: weight/bias geometry invalid");
  }
  // replicate padding at the sequence edges: constant input rows give
  // constant outputs at every position, boundaries included
  const int64_t pad = (k - 1) / 2;
  auto clamp_idx = [t_len](int64_t s) {
    return std::min(t_len - 1, std::max<int64_t>(0, s));
  };
  Tensor out({t_len, cout});
  for (int64_t t = 0; t < t_len; ++t) {
    for (int64_t o = 0; o < cout; ++o) {
      double acc = bv.at(o);
      for (int64_t j = 0; j < k; ++j) {
        const int64_t s = clamp_idx(t + j - pad);
        for (int64_t c = 0; c < cin; ++c)
          acc += xv.at(s, c) * wv.at((o * cin + c) * k + j);
      }
      out.at(t, o) = acc;
    }
  }
  return Var(make_node(
      std::move(out), {x.node(), w.node(), b.node()},
      [t_len, cin, cout, k, pad, clamp_idx](Node& self) {
        const Tensor& g = self.grad;
        const Tensor& xv2 = self.parents[0]->value;
        const Tensor& wv2 = self.parents[1]->value;
        const bool need_x = self.parents[0]->requires_grad;
        const bool need_w = self.parents[1]->requires_grad;
        const bool need_b = self.parents[2]->requires_grad;
        Tensor* gx = need_x ? &self.parents[0]->ensure_grad() : nullptr;
        Tensor* gw = need_w ? &self.parents[1]->ensure_grad() : nullptr;
        Tensor* gb = need_b ? &self.parents[2]->ensure_grad() : nullptr;
        for (int64_t t = 0; t < t_len; ++t) {
          for (int64_t o = 0; o < cout; ++o) {
            const double gv = g.at(t, o);
            if (gv == 0.0) continue;
            if (gb) gb->at(o) += gv;
            for (int64_t j = 0; j < k; ++j) {
              const int64_t s = clamp_idx(t + j - pad);
              for (int64_t c = 0; c < cin; ++c) {
                if (gx) gx->at(s, c) += gv * wv2.at((o * cin + c) * k + j);
                if (gw) gw->at((o * cin + c) * k + j) += gv * xv2.at(s, c);
              }
            }
          }
        }
      }));
}

Var gather_rows(const Var& x, std::vector<int64_t> idx) {
  const Tensor& xv = x.value();
  const int64_t cols = xv.dim(1);
  Tensor out({static_cast<int64_t>(idx.size()), cols});
  for (size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= xv.dim(0))
      throw InvalidInput("gather_rows: index out of range");
    for (int64_t c = 0; c < cols; ++c)
      out.at(static_cast<int64_t>(i), c) = xv.at(idx[i], c);
  }
  return Var(make_node(std::move(out), {x.node()},
                       [idx = std::move(idx), cols](Node& self) {
    Tensor& pg = self.parents[0]->ensure_grad();
    for (size_t i = 0; i < idx.size(); ++i)
      for (int64_t c = 0; c < cols; ++c)
        pg.at(idx[i], c) += self.grad.at(static_cast<int64_t>(i), c);
  }));
}

Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps) {
  const Tensor& xv = x.value();
  const int64_t rows = xv.dim(0), d = xv.dim(1);
  if (gain.value().numel() != d || bias.value().numel() != d) {
    throw InvalidInput("layer_norm: gain/bias length mismatch");
  }
  Tensor out({rows, d});
  Tensor xhat({rows, d});
  Tensor inv_std({rows});
  for (int64_t r = 0; r < rows; ++r) {
    double mean = 0.0;
    for (int64_t c = 0; c < d; ++c) mean += xv.at(r, c);
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (int64_t c = 0; c < d; ++c) {
      const double dv = xv.at(r, c) - mean;
      var += dv * dv;
    }
    var /= static_cast<double>(d);
    const double istd = 1.0 / std::sqrt(var + eps);
    inv_std.at(r) = istd;
    for (int64_t c = 0; c < d; ++c) {
      const double h = (xv.at(r, c) - mean) * istd;
      xhat.at(r, c) = h;
      out.at(r, c) = gain.value().at(c) * h + bias.value().at(c);
    }
  }
  return Var(make_node(
      std::move(out), {x.node(), gain.node(), bias.node()},
      [rows, d, xhat, inv_std](Node& self) {
        const Tensor& g = self.grad;
        const Tensor& gv = self.parents[1]->value;
        const bool need_x = self.parents[0]->requires_grad;
        Tensor* gx = need_x ? &self.parents[0]->ensure_grad() : nullptr;
        Tensor* gg = self.parents[1]->requires_grad
                         ? &self.parents[1]->ensure_grad()
                         : nullptr;
        Tensor* gb = self.parents[2]->requires_grad
                         ? &self.parents[2]->ensure_grad()
                         : nullptr;
        for (int64_t r = 0; r < rows; ++r) {
          double sum_dh = 0.0, sum_dh_h = 0.0;
          for (int64_t c = 0; c < d; ++c) {
            const double dh = g.at(r, c) * gv.at(c);
            sum_dh += dh;
            sum_dh_h += dh * xhat.at(r, c);
            if (gg) gg->at(c) += g.at(r, c) * xhat.at(r, c);
            if (gb) gb->at(c) += g.at(r, c);
          }
          if (gx) {
            const double istd = inv_std.at(r);
            const double inv_d = 1.0 / static_cast<double>(d);
            for (int64_t c = 0; c < d; ++c) {
              const double dh = g.at(r, c) * gv.at(c);
              gx->at(r, c) += istd * (dh - inv_d * sum_dh -
                                      xhat.at(r, c) * inv_d * sum_dh_h);
            }
          }
        }
      }));
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw InvalidInput("concat_rows: empty");
  const int64_t cols = parts[0].value().dim(1);
  int64_t total = 0;
  std::vector<NodePtr> parents;
  for (const auto& p : parts) {
    if (p.value().dim(1) != cols)
      throw InvalidInput("concat_rows: column mismatch");
    total += p.value().dim(0);
    parents.push_back(p.node());
  }
  Tensor out({total, cols});
  int64_t r0 = 0;
  for (const auto& p : parts) {
    const Tensor& pv = p.value();
    for (int64_t r = 0; r < pv.dim(0); ++r)
      for (int64_t c = 0; c < cols; ++c) out.at(r0 + r, c) = pv.at(r, c);
    r0 += pv.dim(0);
  }
  return Var(make_node(std::move(out), std::move(parents), [cols](Node& self) {
    int64_t r0 = 0;
    for (auto& par : self.parents) {
      const int64_t pr = par->value.dim(0);
      if (par->requires_grad) {
        Tensor& pg = par->ensure_grad();
        for (int64_t r = 0; r < pr; ++r)
          for (int64_t c = 0; c < cols; ++c)
            pg.at(r, c) += self.grad.at(r0 + r, c);
      }
      r0 += pr;
    }
  }));
}

Var slice_rows(const Var& x, int64_t from, int64_t to) {
  const Tensor& xv = x.value();
  if (from < 0 || to > xv.dim(0) || from >= to)
    throw InvalidInput("slice_rows: bad range");
  const int64_t cols = xv.dim(1);
  Tensor out({to - from, cols});
  for (int64_t r = from; r < to; ++r)
    for (int64_t c = 0; c < cols; ++c) out.at(r - from, c) = xv.at(r, c);
  return Var(make_node(std::move(out), {x.node()}, [from, to, cols](Node& self) {
    Tensor& pg = self.parents[0]->ensure_grad();
    for (int64_t r = from; r < to; ++r)
      for (int64_t c = 0; c < cols; ++c)
        pg.at(r, c) += self.grad.at(r - from, c);
  }));
}

Var concat_cols(const Var& a, const Var& b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.dim(0) != bv.dim(0)) throw InvalidInput("concat_cols: row mismatch");
  const int64_t rows = av.dim(0), ca = av.dim(1), cb = bv.dim(1);
  Tensor out({rows, ca + cb});
  for (int64_t r = 0; r < rows; ++r) {
    for (int64_t c = 0; c < ca; ++c) out.at(r, c) = av.at(r, c);
    for (int64_t c = 0; c < cb; ++c) out.at(r, ca + c) = bv.at(r, c);
  }
  return Var(make_node(std::move(out), {a.node(), b.node()},
                       [rows, ca, cb](Node& self) {
    if (self.parents[0]->requires_grad) {
      Tensor& pg = self.parents[0]->ensure_grad();
      for (int64_t r = 0; r < rows; ++r)
        for (int64_t c = 0; c < ca; ++c) pg.at(r, c) += self.grad.at(r, c);
    }
    if (self.parents[1]->requires_grad) {
      Tensor& pg = self.parents[1]->ensure_grad();
      for (int64_t r = 0; r < rows; ++r)
        for (int64_t c = 0; c < cb; ++c) pg.at(r, c) += self.grad.at(r, ca + c);
    }
  }));
}

Var slice_cols(const Var& x, int64_t from, int64_t to) {
  const Tensor& xv = x.value();
  if (from < 0 || to > xv.dim(1) || from >= to)
    throw InvalidInput("slice_cols: bad range");
  const int64_t rows = xv.dim(0);
  Tensor out({rows, to - from});
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t c = from; c < to; ++c) out.at(r, c - from) = xv.at(r, c);
  return Var(make_node(std::move(out), {x.node()}, [rows, from, to](Node& self) {
    Tensor& pg = self.parents[0]->ensure_grad();
    for (int64_t r = 0; r < rows; ++r)
      for (int64_t c = from; c < to; ++c)
        pg.at(r, c) += self.grad.at(r, c - from);
  }));
}

Var mean_all(const Var& x) {
  const int64_t n = x.value().numel();
  double acc = 0.0;
  for (int64_t i = 0; i < n; ++i) acc += x.value().at(i);
  Tensor out({1});
  out.at(0) = acc / static_cast<double>(n);
  return Var(make_node(std::move(out), {x.node()}, [n](Node& self) {
    Tensor& pg = self.parents[0]->ensure_grad();
    const double g = self.grad.at(0) / static_cast<double>(n);
    for (int64_t i = 0; i < n; ++i) pg.at(i) += g;
  }));
}

Var sum_all(const Var& x) {
  const int64_t n = x.value().numel();
  double acc = 0.0;
  for (int64_t i = 0; i < n; ++i) acc += x.value().at(i);
  Tensor out({1});
  out.at(0) = acc;
  return Var(make_node(std::move(out), {x.node()}, [n](Node& self) {
    Tensor& pg = self.parents[0]->ensure_grad();
    const double g = self.grad.at(0);
    for (int64_t i = 0; i < n; ++i) pg.at(i) += g;
  }));
}

Var mse(const Var& a, const Var& b) { return mean_all(square(sub(a, b))); }

Var causal_attention(const Var& q, const Var& k, const Var& v) {
  const Tensor& qv = q.value();
  const Tensor& kv = k.value();
  const Tensor& vv = v.value();
  const int64_t t_len = qv.dim(0), dh = qv.dim(1);
  if (!kv.same_shape(qv) || !vv.same_shape(qv)) {
    throw InvalidInput("causal_attention: q/k/v shape mismatch");
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  // probs stored lower-triangular in a full matrix (upper strictly zero)
  Tensor probs({t_len, t_len});
  Tensor out({t_len, dh});
  for (int64_t i = 0; i < t_len; ++i) {
    double maxs = -1e300;
    for (int64_t j = 0; j <= i; ++j) {
      double s = 0.0;
      for (int64_t c = 0; c < dh; ++c) s += qv.at(i, c) * kv.at(j, c);
      s *= scale;
      probs.at(i, j) = s;
      if (s > maxs) maxs = s;
    }
    double denom = 0.0;
    for (int64_t j = 0; j <= i; ++j) {
      const double e = std::exp(probs.at(i, j) - maxs);
      probs.at(i, j) = e;
      denom += e;
    }
    for (int64_t j = 0; j <= i; ++j) {
      probs.at(i, j) /= denom;
      for (int64_t c = 0; c < dh; ++c)
        out.at(i, c) += probs.at(i, j) * vv.at(j, c);
    }
  }
  return Var(make_node(
      std::move(out), {q.node(), k.node(), v.node()},
      [t_len, dh, scale, probs](Node& self) {
        const Tensor& g = self.grad;
        const Tensor& qv2 = self.parents[0]->value;
        const Tensor& kv2 = self.parents[1]->value;
        const Tensor& vv2 = self.parents[2]->value;
        Tensor* gq = self.parents[0]->requires_grad
                         ? &self.parents[0]->ensure_grad()
                         : nullptr;
        Tensor* gk = self.parents[1]->requires_grad
                         ? &self.parents[1]->ensure_grad()
                         : nullptr;
        Tensor* gv = self.parents[2]->requires_grad
                         ? &self.parents[2]->ensure_grad()
                         : nullptr;
        std::vector<double> da(static_cast<size_t>(t_len));
        for (int64_t i = 0; i < t_len; ++i) {
          // dA_ij = dO_i . v_j  (j <= i)
          double row_dot = 0.0;
          for (int64_t j = 0; j <= i; ++j) {
            double acc = 0.0;
            for (int64_t c = 0; c < dh; ++c) acc += g.at(i, c) * vv2.at(j, c);
            da[static_cast<size_t>(j)] = acc;
            row_dot += probs.at(i, j) * acc;
          }
          for (int64_t j = 0; j <= i; ++j) {
            const double ds =
                probs.at(i, j) * (da[static_cast<size_t>(j)] - row_dot);
            if (gv) {
              for (int64_t c = 0; c < dh; ++c)
                gv->at(j, c) += probs.at(i, j) * g.at(i, c);
            }
            if (gq) {
              for (int64_t c = 0; c < dh; ++c)
                gq->at(i, c) += scale * ds * kv2.at(j, c);
            }
            if (gk) {
              for (int64_t c = 0; c < dh; ++c)
                gk->at(j, c) += scale * ds * qv2.at(i, c);
            }
          }
        }
      }));
}

Var softmax_cross_entropy(const Var& logits,
                          const std::vector<int64_t>& targets) {
  const Tensor& lv = logits.value();
  const int64_t n = lv.dim(0), k = lv.dim(1);
  if (static_cast<int64_t>(targets.size()) != n) {
    throw InvalidInput("softmax_cross_entropy: target count mismatch");
  }
  Tensor probs({n, k});
  double loss = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    if (targets[static_cast<size_t>(i)] < 0 ||
        targets[static_cast<size_t>(i)] >= k) {
      throw InvalidInput("softmax_cross_entropy: target out of range");
    }
    double maxv = lv.at(i, 0);
    for (int64_t j = 1; j < k; ++j) maxv = std::max(maxv, lv.at(i, j));
    double denom = 0.0;
    for (int64_t j = 0; j < k; ++j) {
      const double e = std::exp(lv.at(i, j) - maxv);
      probs.at(i, j) = e;
      denom += e;
    }
    for (int64_t j = 0; j < k; ++j) probs.at(i, j) /= denom;
    loss -= std::log(probs.at(i, targets[static_cast<size_t>(i)]));
  }
  Tensor out({1});
  out.at(0) = loss / static_cast<double>(n);
  return Var(make_node(std::move(out), {logits.node()},
                       [n, k, probs, targets](Node& self) {
    Tensor& pg = self.parents[0]->ensure_grad();
    const double g = self.grad.at(0) / static_cast<double>(n);
    for (int64_t i = 0; i < n; ++i) {
      for (int64_t j = 0; j < k; ++j) pg.at(i, j) += g * probs.at(i, j);
      pg.at(i, targets[static_cast<size_t>(i)]) -= g;
    }
  }));
}

Var straight_through(const Var& pre, Tensor quantized) {
  if (!pre.value().same_shape(quantized)) {
    throw InvalidInput("straight_through: shape mismatch");
  }
  return Var(make_node(std::move(quantized), {pre.node()}, [](Node& self) {
    Tensor& pg = self.parents[0]->ensure_grad();
    for (int64_t i = 0; i < self.grad.numel(); ++i) pg.at(i) += self.grad.at(i);
  }));
}

Var detach(const Var& x) { return Var::constant(x.value()); }

void backward(const Var& root) {
  if (root.value().numel() != 1) {
    throw InvalidInput("backward: root must be scalar");
  }
  Node* r = root.node().get();
  if (!r->requires_grad) return;
  // iterative post-order DFS
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(r, 0);
  visited.insert(r);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next].get();
      ++next;
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  r->ensure_grad().fill(1.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && n->grad_alloc) n->backward_fn(*n);
  }
}

}  // namespace ag
}  // namespace adatta
