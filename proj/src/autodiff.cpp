#include "farconf/autodiff.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_set>

#include "farconf/error.hpp"

namespace farconf::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

ConstMap cmap(const Tensor& t) {
  return ConstMap(t.data().data(), static_cast<Eigen::Index>(t.rows()),
                  static_cast<Eigen::Index>(t.cols()));
}

MutMap mmap(Tensor& t) {
  return MutMap(t.data().data(), static_cast<Eigen::Index>(t.rows()),
                static_cast<Eigen::Index>(t.cols()));
}

thread_local std::size_t g_last_visit_count = 0;

Var make_op(Tensor value, OpTag tag, std::vector<std::shared_ptr<Node>> parents,
            std::function<void(Node&)> rule) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->tag = tag;
  node->requires_grad = std::any_of(parents.begin(), parents.end(),
                                    [](const auto& p) { return p->requires_grad; });
  node->parents = std::move(parents);
  if (node->requires_grad) node->backward_rule = std::move(rule);
  return Var(std::move(node));
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (!a.value().same_shape(b.value())) {
    throw DimensionError(std::string(op) + ": shape mismatch " + a.value().shape_string() +
                         " vs " + b.value().shape_string());
  }
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Elementwise op whose local derivative depends on (input, output).
template <class Fwd, class Deriv>
Var unary(const Var& a, OpTag tag, Fwd fwd, Deriv deriv) {
  Tensor out(a.value().shape());
  const auto& in = a.value().data();
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = fwd(in[i]);
  return make_op(std::move(out), tag, {a.ptr()}, [deriv](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    Tensor& pg = p.grad_buffer();
    const auto& x = p.value.data();
    const auto& y = self.value.data();
    const auto& g = self.grad.data();
    for (std::size_t i = 0; i < g.size(); ++i) pg[i] += g[i] * deriv(x[i], y[i]);
  });
}

}  // namespace

void Node::accumulate(const Tensor& g) {
  Tensor& buf = grad_buffer();
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] += g[i];
}

Tensor& Node::grad_buffer() {
  if (!has_grad()) grad = Tensor(value.shape(), 0.0);
  return grad;
}

Var Var::parameter(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = true;
  return Var(std::move(node));
}

Var Var::constant(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return Var(std::move(node));
}

Tensor Var::grad() const {
  if (node_->has_grad()) return node_->grad;
  return Tensor(node_->value.shape(), 0.0);
}

Var matmul(const Var& a, const Var& b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.cols() != bv.rows()) {
    throw DimensionError("matmul: inner dimensions disagree " + av.shape_string() + " x " +
                         bv.shape_string());
  }
  Tensor out = Tensor::matrix(av.rows(), bv.cols());
  mmap(out).noalias() = cmap(av) * cmap(bv);
  return make_op(std::move(out), OpTag::matmul, {a.ptr(), b.ptr()}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) mmap(pa.grad_buffer()).noalias() += cmap(self.grad) * cmap(pb.value).transpose();
    if (pb.requires_grad) mmap(pb.grad_buffer()).noalias() += cmap(pa.value).transpose() * cmap(self.grad);
  });
}

Var linear(const Var& x, const Var& w, const Var& bias) {
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  const Tensor& bv = bias.value();
  if (xv.cols() != wv.cols()) {
    throw DimensionError("linear: input has " + std::to_string(xv.cols()) +
                         " features, weight expects " + std::to_string(wv.cols()));
  }
  if (bv.size() != wv.rows()) {
    throw DimensionError("linear: bias length " + std::to_string(bv.size()) +
                         " does not match weight rows " + std::to_string(wv.rows()));
  }
  Tensor out = Tensor::matrix(xv.rows(), wv.rows());
  auto o = mmap(out);
  o.noalias() = cmap(xv) * cmap(wv).transpose();
  const Eigen::Map<const Eigen::RowVectorXd> b(bv.data().data(), static_cast<Eigen::Index>(bv.size()));
  o.rowwise() += b;
  return make_op(std::move(out), OpTag::linear, {x.ptr(), w.ptr(), bias.ptr()}, [](Node& self) {
    Node& px = *self.parents[0];
    Node& pw = *self.parents[1];
    Node& pb = *self.parents[2];
    const auto g = cmap(self.grad);
    if (px.requires_grad) mmap(px.grad_buffer()).noalias() += g * cmap(pw.value);
    if (pw.requires_grad) mmap(pw.grad_buffer()).noalias() += g.transpose() * cmap(px.value);
    if (pb.requires_grad) {
      Tensor& bg = pb.grad_buffer();
      Eigen::Map<Eigen::RowVectorXd> bm(bg.data().data(), static_cast<Eigen::Index>(bg.size()));
      bm += g.colwise().sum();
    }
  });
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return make_op(std::move(out), OpTag::add, {a.ptr(), b.ptr()}, [](Node& self) {
    for (auto& p : self.parents) {
      if (p->requires_grad) p->accumulate(self.grad);
    }
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return make_op(std::move(out), OpTag::sub, {a.ptr(), b.ptr()}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) pa.accumulate(self.grad);
    if (pb.requires_grad) {
      Tensor& bg = pb.grad_buffer();
      for (std::size_t i = 0; i < bg.size(); ++i) bg[i] -= self.grad[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return make_op(std::move(out), OpTag::mul, {a.ptr(), b.ptr()}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) {
      Tensor& ag = pa.grad_buffer();
      for (std::size_t i = 0; i < ag.size(); ++i) ag[i] += self.grad[i] * pb.value[i];
    }
    if (pb.requires_grad) {
      Tensor& bg = pb.grad_buffer();
      for (std::size_t i = 0; i < bg.size(); ++i) bg[i] += self.grad[i] * pa.value[i];
    }
  });
}

Var scale(const Var& a, double factor) {
  Tensor out = a.value();
  for (auto& v : out.data()) v *= factor;
  return make_op(std::move(out), OpTag::scale, {a.ptr()}, [factor](Node& self) {
    Tensor& ag = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < ag.size(); ++i) ag[i] += factor * self.grad[i];
  });
}

Var add_scalar(const Var& a, double offset) {
  Tensor out = a.value();
  for (auto& v : out.data()) v += offset;
  return make_op(std::move(out), OpTag::add_scalar, {a.ptr()},
                 [](Node& self) { self.parents[0]->accumulate(self.grad); });
}

Var relu(const Var& a) {
  return unary(
      a, OpTag::relu, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var sigmoid(const Var& a) {
  return unary(a, OpTag::sigmoid, stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

Var tanh(const Var& a) {
  return unary(
      a, OpTag::tanh, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Var log_sigmoid(const Var& a) {
  return unary(
      a, OpTag::log_sigmoid,
      [](double x) { return std::min(x, 0.0) - std::log1p(std::exp(-std::abs(x))); },
      [](double x, double) { return stable_sigmoid(-x); });
}

Var log_softmax(const Var& logits) {
  const Tensor& z = logits.value();
  Tensor out(z.shape());
  for (std::size_t r = 0; r < z.rows(); ++r) {
    auto in = z.row(r);
    auto o = out.row(r);
    const double m = *std::max_element(in.begin(), in.end());
    double s = 0.0;
    for (double v : in) s += std::exp(v - m);
    const double lse = m + std::log(s);
    for (std::size_t k = 0; k < in.size(); ++k) o[k] = in[k] - lse;
  }
  return make_op(std::move(out), OpTag::log_softmax, {logits.ptr()}, [](Node& self) {
    Node& p = *self.parents[0];
    Tensor& pg = p.grad_buffer();
    for (std::size_t r = 0; r < self.value.rows(); ++r) {
      auto g = self.grad.row(r);
      auto y = self.value.row(r);
      auto dz = pg.row(r);
      double gsum = 0.0;
      for (double v : g) gsum += v;
      for (std::size_t k = 0; k < g.size(); ++k) dz[k] += g[k] - std::exp(y[k]) * gsum;
    }
  });
}

Var pick(const Var& a, std::span<const int> index) {
  const Tensor& v = a.value();
  if (index.size() != v.rows()) {
    throw DimensionError("pick: " + std::to_string(index.size()) + " indices for " +
                         std::to_string(v.rows()) + " rows");
  }
  std::vector<int> idx(index.begin(), index.end());
  Tensor out = Tensor::matrix(v.rows(), 1);
  for (std::size_t r = 0; r < v.rows(); ++r) {
    if (idx[r] < 0 || static_cast<std::size_t>(idx[r]) >= v.cols()) {
      throw DimensionError("pick: index " + std::to_string(idx[r]) + " out of range");
    }
    out[r] = v(r, static_cast<std::size_t>(idx[r]));
  }
  return make_op(std::move(out), OpTag::pick, {a.ptr()}, [idx = std::move(idx)](Node& self) {
    Tensor& pg = self.parents[0]->grad_buffer();
    for (std::size_t r = 0; r < idx.size(); ++r) {
      pg(r, static_cast<std::size_t>(idx[r])) += self.grad[r];
    }
  });
}

Var sum(const Var& a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return make_op(Tensor::scalar(s), OpTag::sum, {a.ptr()}, [](Node& self) {
    Tensor& pg = self.parents[0]->grad_buffer();
    const double g = self.grad[0];
    for (auto& v : pg.data()) v += g;
  });
}

Var mean(const Var& a) {
  const std::size_t n = a.value().size();
  if (n == 0) throw ContractError("mean of empty tensor");
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return make_op(Tensor::scalar(s / static_cast<double>(n)), OpTag::mean, {a.ptr()},
                 [n](Node& self) {
                   Tensor& pg = self.parents[0]->grad_buffer();
                   const double g = self.grad[0] / static_cast<double>(n);
                   for (auto& v : pg.data()) v += g;
                 });
}

Var concat_rows(const Var& top, const Var& bottom) {
  const Tensor& t = top.value();
  const Tensor& b = bottom.value();
  if (t.cols() != b.cols()) throw DimensionError("concat_rows: column count mismatch");
  const std::size_t split = t.size();
  Tensor out = Tensor::matrix(t.rows() + b.rows(), t.cols());
  std::copy(t.data().begin(), t.data().end(), out.data().begin());
  std::copy(b.data().begin(), b.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(split));
  return make_op(std::move(out), OpTag::concat_rows, {top.ptr(), bottom.ptr()},
                 [split](Node& self) {
                   Node& pt = *self.parents[0];
                   Node& pb = *self.parents[1];
                   if (pt.requires_grad) {
                     Tensor& g = pt.grad_buffer();
                     for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
                   }
                   if (pb.requires_grad) {
                     Tensor& g = pb.grad_buffer();
                     for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[split + i];
                   }
                 });
}

void backward(const Var& loss) {
  if (loss.value().size() != 1) {
    throw ContractError("backward: loss must be scalar, got shape " + loss.value().shape_string());
  }
  g_last_visit_count = 0;
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS over the nodes that carry gradients.
  std::vector<Node*> order;
  std::unordered_set<const Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(&loss.node(), 0);
  seen.insert(&loss.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && seen.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node* n : order) {
    if (n->tag != OpTag::leaf) n->grad = Tensor(n->value.shape(), 0.0);
  }
  loss.node().grad_buffer()[0] += 1.0;

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    ++g_last_visit_count;
    if (n->tag != OpTag::leaf && n->backward_rule) n->backward_rule(*n);
  }
}

void zero_grad(std::span<Var> vars) {
  for (auto& v : vars) {
    auto& g = v.node().grad.data();
    std::fill(g.begin(), g.end(), 0.0);
  }
}

std::size_t last_backward_visit_count() { return g_last_visit_count; }

}  // namespace farconf::ad
