#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "farconf/autodiff.hpp"
#include "farconf/tensor.hpp"

namespace farconf {

enum class OptimizerKind { sgd, adam };

std::string_view to_string(OptimizerKind k);
OptimizerKind optimizer_from_string(std::string_view s);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adam;
  double learning_rate = 1e-3;
  double momentum = 0.0;  // sgd only
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct SgdState {
  std::vector<Tensor> velocity;
};

struct AdamState {
  std::size_t step = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;
};

// v <- momentum v + g;  w <- w - lr v
std::vector<Tensor> sgd_step(std::span<const Tensor> params, std::span<const Tensor> grads,
                             const OptimizerConfig& cfg, SgdState& state);

// Adam with bias-corrected moments.
std::vector<Tensor> adam_step(std::span<const Tensor> params, std::span<const Tensor> grads,
                              const OptimizerConfig& cfg, AdamState& state);

// Dispatches on cfg.kind and owns the matching state.
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig cfg) : cfg_(cfg) {}

  std::vector<Tensor> step(std::span<const Tensor> params, std::span<const Tensor> grads);

  // Updates leaf values in place from their gradients, then zeroes the gradients.
  // Leaves must be passed in the same order on every call.
  void apply(std::span<ad::Var> leaves);

  const OptimizerConfig& config() const { return cfg_; }

 private:
  OptimizerConfig cfg_;
  SgdState sgd_;
  AdamState adam_;
};

}  // namespace farconf
