#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "core/tensor.h"

namespace adatta {
namespace ag {

// Reverse-mode autodiff over a dynamically built tape. Nodes own their value,
// an on-demand gradient buffer, and a backward closure that scatters the
// node's gradient into its parents. Graphs are rebuilt every step; parameters
// are long-lived leaf nodes owned by the model.
struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  bool grad_alloc = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  Tensor& ensure_grad() {
    if (!grad_alloc) {
      grad = Tensor::zeros(value.shape());
      grad_alloc = true;
    }
    return grad;
  }
};

using NodePtr = std::shared_ptr<Node>;

class Var {
 public:
  Var() = default;
  explicit Var(NodePtr n) : node_(std::move(n)) {}

  static Var leaf(Tensor value, bool requires_grad);
  static Var constant(Tensor value) { return leaf(std::move(value), false); }

  const Tensor& value() const { return node_->value; }
  Tensor& grad() { return node_->ensure_grad(); }
  bool defined() const { return node_ != nullptr; }
  bool requires_grad() const { return node_->requires_grad; }
  const NodePtr& node() const { return node_; }

  int64_t rows() const { return node_->value.rows(); }
  int64_t cols() const { return node_->value.cols(); }

 private:
  NodePtr node_;
};

// elementwise / scalar
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var add_scalar(const Var& a, double c);
Var mul_scalar(const Var& a, double c);
Var square(const Var& a);
Var exp_op(const Var& a);
Var relu(const Var& a);
Var leaky_relu(const Var& a, double alpha);
Var tanh_op(const Var& a);
Var clamp_op(const Var& a, double lo, double hi);

// matrix / structure
Var matmul(const Var& a, const Var& b);
Var add_rowvec(const Var& m, const Var& v);  // m: [T,D], v: [D] or [1,D]
Var conv1d_same(const Var& x, const Var& w, const Var& b);  // x [T,Cin], w [Cout,Cin,k] odd k
Var gather_rows(const Var& x, std::vector<int64_t> idx);
Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps = 1e-5);
Var concat_rows(const std::vector<Var>& parts);
Var slice_rows(const Var& x, int64_t from, int64_t to);
Var concat_cols(const Var& a, const Var& b);
Var slice_cols(const Var& x, int64_t from, int64_t to);

// reductions
Var mean_all(const Var& x);
Var sum_all(const Var& x);
Var mse(const Var& a, const Var& b);

// attention over one head; q,k,v: [T, dh]; position i attends to j <= i only.
// Masked-out positions never enter the arithmetic, so logits at position i
// are structurally independent of anything later.
Var causal_attention(const Var& q, const Var& k, const Var& v);

// mean over rows of -log softmax(logits)[target]; logits [N,K]
Var softmax_cross_entropy(const Var& logits, const std::vector<int64_t>& targets);

// value = quantized, gradient passes to `pre` unchanged (straight-through)
Var straight_through(const Var& pre, Tensor quantized);
Var detach(const Var& x);

void backward(const Var& root);

}  // namespace ag
}  // namespace adatta
