#pragma once

// Define-by-run reverse-mode automatic differentiation over dense tensors.
//
// Every op allocates a Node holding its value, the shared handles of its
// operands and a backward rule. backward() walks the reachable graph once in
// reverse topological order. Leaf gradients accumulate across calls until
// zero_grad(); interior gradients are recomputed from scratch on every call.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "farconf/tensor.hpp"

namespace farconf::ad {

enum class OpTag {
  leaf,
  matmul,
  linear,
  add,
  sub,
  mul,
  scale,
  add_scalar,
  relu,
  sigmoid,
  tanh,
  log_softmax,
  log_sigmoid,
  pick,
  sum,
  mean,
  concat_rows,
};

struct Node {
  Tensor value;
  Tensor grad;  // empty until the first backward pass reaches this node
  bool requires_grad = false;
  OpTag tag = OpTag::leaf;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into parents that require grad.
  std::function<void(Node&)> backward_rule;

  bool has_grad() const { return grad.size() == value.size() && value.size() > 0; }
  // Adds `g` into grad, allocating it on first use.
  void accumulate(const Tensor& g);
  Tensor& grad_buffer();
};

// Shared handle to a graph node.
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  // Leaf that receives gradients.
  static Var parameter(Tensor value);
  // Leaf that never receives gradients (inputs, detached values).
  static Var constant(Tensor value);

  const Tensor& value() const { return node_->value; }
  // Gradient of the last backward pass; zeros if none reached this node.
  Tensor grad() const;
  bool requires_grad() const { return node_->requires_grad; }
  OpTag tag() const { return node_->tag; }

  Node& node() const { return *node_; }
  const std::shared_ptr<Node>& ptr() const { return node_; }

  // New constant leaf holding a copy of this value.
  Var detach() const { return constant(node_->value); }

 private:
  std::shared_ptr<Node> node_;
};

// a (n x k) * b (k x m).
Var matmul(const Var& a, const Var& b);
// x (n x in) * w^T (in x out) + bias (out), broadcast over rows.
Var linear(const Var& x, const Var& w, const Var& bias);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
// Elementwise product.
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double factor);
Var add_scalar(const Var& a, double offset);
// Subgradient at 0 is 0.
Var relu(const Var& a);
Var sigmoid(const Var& a);
Var tanh(const Var& a);
// Row-wise, stabilised by max subtraction.
Var log_softmax(const Var& logits);
// log(sigmoid(x)) without overflow for large |x|.
Var log_sigmoid(const Var& a);
// Column `index[i]` of row i, as an (n x 1) column.
Var pick(const Var& a, std::span<const int> index);
Var sum(const Var& a);
Var mean(const Var& a);
Var concat_rows(const Var& top, const Var& bottom);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(double s, const Var& a) { return scale(a, s); }

// Populate gradients of every reachable node w.r.t. the scalar `loss`.
// Throws ContractError if loss holds more than one element.
void backward(const Var& loss);

// Clears accumulated gradients on the given leaves.
void zero_grad(std::span<Var> vars);

// Number of nodes visited by the most recent backward() on this thread.
std::size_t last_backward_visit_count();

}  // namespace farconf::ad
