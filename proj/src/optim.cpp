#include "farconf/optim.hpp"

#include <Eigen/Core>
#include <cmath>
#include <string>

#include "farconf/error.hpp"

namespace farconf {

using ad::Node;

namespace {

void check_pairing(std::span<const Tensor> params, std::span<const Tensor> grads) {
  if (params.size() != grads.size()) throw DimensionError("optimizer: params/grads count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].same_shape(grads[i])) {
      throw DimensionError("optimizer: gradient " + std::to_string(i) + " has shape " +
                           grads[i].shape_string() + ", parameter " + params[i].shape_string());
    }
  }
}

void init_like(std::vector<Tensor>& slots, std::span<const Tensor> params) {
  if (slots.size() == params.size()) return;
  slots.clear();
  for (const auto& p : params) slots.emplace_back(p.shape(), 0.0);
}

struct AdamScale {
  double c1, c2;
};

AdamScale advance(AdamState& state, const OptimizerConfig& cfg) {
  ++state.step;
  const double t = static_cast<double>(state.step);
  return {1.0 - std::pow(cfg.beta1, t), 1.0 - std::pow(cfg.beta2, t)};
}

using Arr = Eigen::Map<Eigen::ArrayXd>;
using CArr = Eigen::Map<const Eigen::ArrayXd>;

void sgd_kernel(double* w, const double* g, double* vel, std::size_t n, const OptimizerConfig& cfg) {
  const auto len = static_cast<Eigen::Index>(n);
  Arr v(vel, len);
  v = cfg.momentum * v + CArr(g, len);
  Arr(w, len) -= cfg.learning_rate * v;
}

void adam_kernel(double* w, const double* g, double* m, double* v, std::size_t n,
                 const OptimizerConfig& cfg, AdamScale sc) {
  const auto len = static_cast<Eigen::Index>(n);
  const CArr ga(g, len);
  Arr ma(m, len), va(v, len);
  ma = cfg.beta1 * ma + (1.0 - cfg.beta1) * ga;
  va = cfg.beta2 * va + (1.0 - cfg.beta2) * ga.square();
  Arr(w, len) -= cfg.learning_rate * (ma / sc.c1) / ((va / sc.c2).sqrt() + cfg.eps);
}

}  // namespace

std::string_view to_string(OptimizerKind k) { return k == OptimizerKind::sgd ? "sgd" : "adam"; }

OptimizerKind optimizer_from_string(std::string_view s) {
  if (s == "sgd") return OptimizerKind::sgd;
  if (s == "adam") return OptimizerKind::adam;
  throw ConfigError("unknown optimizer '" + std::string(s) + "'");
}

std::vector<Tensor> sgd_step(std::span<const Tensor> params, std::span<const Tensor> grads,
                             const OptimizerConfig& cfg, SgdState& state) {
  check_pairing(params, grads);
  init_like(state.velocity, params);
  std::vector<Tensor> out(params.begin(), params.end());
  for (std::size_t i = 0; i < params.size(); ++i) {
    sgd_kernel(out[i].data().data(), grads[i].data().data(), state.velocity[i].data().data(),
               out[i].size(), cfg);
  }
  return out;
}

std::vector<Tensor> adam_step(std::span<const Tensor> params, std::span<const Tensor> grads,
                              const OptimizerConfig& cfg, AdamState& state) {
  check_pairing(params, grads);
  init_like(state.m, params);
  init_like(state.v, params);
  const AdamScale sc = advance(state, cfg);
  std::vector<Tensor> out(params.begin(), params.end());
  for (std::size_t i = 0; i < params.size(); ++i) {
    adam_kernel(out[i].data().data(), grads[i].data().data(), state.m[i].data().data(),
                state.v[i].data().data(), out[i].size(), cfg, sc);
  }
  return out;
}

std::vector<Tensor> Optimizer::step(std::span<const Tensor> params, std::span<const Tensor> grads) {
  return cfg_.kind == OptimizerKind::sgd ? sgd_step(params, grads, cfg_, sgd_)
                                         : adam_step(params, grads, cfg_, adam_);
}

void Optimizer::apply(std::span<ad::Var> leaves) {
  for (auto& leaf : leaves) {
    if (!leaf.requires_grad()) throw ContractError("optimizer: leaf does not require grad");
    leaf.node().grad_buffer();
  }
  auto zeros = [&] {
    std::vector<Tensor> z;
    for (const auto& leaf : leaves) z.emplace_back(leaf.value().shape(), 0.0);
    return z;
  };
  AdamScale sc{};
  if (cfg_.kind == OptimizerKind::sgd) {
    if (sgd_.velocity.size() != leaves.size()) sgd_.velocity = zeros();
  } else {
    if (adam_.m.size() != leaves.size()) {
      adam_.m = zeros();
      adam_.v = zeros();
    }
    sc = advance(adam_, cfg_);
  }
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    Node& n = leaves[i].node();
    double* w = n.value.data().data();
    const double* g = n.grad.data().data();
    if (cfg_.kind == OptimizerKind::sgd) {
      if (!sgd_.velocity[i].same_shape(n.value)) throw DimensionError("optimizer: leaf shape changed");
      sgd_kernel(w, g, sgd_.velocity[i].data().data(), n.value.size(), cfg_);
    } else {
      if (!adam_.m[i].same_shape(n.value)) throw DimensionError("optimizer: leaf shape changed");
      adam_kernel(w, g, adam_.m[i].data().data(), adam_.v[i].data().data(), n.value.size(), cfg_, sc);
    }
  }
  ad::zero_grad(leaves);
}

}  // namespace farconf
