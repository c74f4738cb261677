#pragma once

#include <cstddef>
#include <span>

#include "farconf/autodiff.hpp"
#include "farconf/mlp.hpp"

namespace farconf {

// Mean negative log-likelihood of `labels` under softmax(logits). Labels must
// lie in [0, logits.cols()); an OOD marker is a ContractError.
ad::Var cross_entropy(const ad::Var& logits, std::span<const int> labels);

// Classifier term on in-distribution samples.
ad::Var cross_entropy_in(const ParamVars& params, const Tensor& x, std::span<const int> labels);

// Batch mean of KL(U || softmax(logits)) over `num_classes` outputs:
//   sum_k (1/K) (log(1/K) - log_softmax_k) = -log K - mean_k log_softmax_k.
// Computed from log_softmax, never from clamped probabilities.
ad::Var kl_uniform_from_logits(const ad::Var& logits, std::size_t num_classes);
ad::Var kl_uniform(const ParamVars& params, const Tensor& x, std::size_t num_classes);

// Discriminator loss, the negated GAN value:
//   -(mean log D(real) + mean log(1 - D(fake))), D = sigmoid(logit).
ad::Var discriminator_loss(const ad::Var& real_logits, const ad::Var& fake_logits);

// Generator's adversarial term mean log(1 - D(fake)), which G minimises.
ad::Var generator_adversarial_term(const ad::Var& fake_logits);

}  // namespace farconf
