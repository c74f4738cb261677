#include "farconf/losses.hpp"

#include <cmath>
#include <string>

#include "farconf/error.hpp"

namespace farconf {

ad::Var cross_entropy(const ad::Var& logits, std::span<const int> labels) {
  const std::size_t k = logits.value().cols();
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= k) {
      throw ContractError("cross_entropy: label " + std::to_string(y) + " outside [0, " +
                          std::to_string(k) + ")");
    }
  }
  return ad::scale(ad::mean(ad::pick(ad::log_softmax(logits), labels)), -1.0);
}

ad::Var cross_entropy_in(const ParamVars& params, const Tensor& x, std::span<const int> labels) {
  return cross_entropy(forward_graph(params, ad::Var::constant(x)), labels);
}

ad::Var kl_uniform_from_logits(const ad::Var& logits, std::size_t num_classes) {
  if (num_classes < 2) throw ContractError("kl_uniform: K must be at least 2");
  if (logits.value().cols() != num_classes) {
    throw DimensionError("kl_uniform: logits have " + std::to_string(logits.value().cols()) +
                         " columns, K = " + std::to_string(num_classes));
  }
  const double log_k = std::log(static_cast<double>(num_classes));
  return ad::add_scalar(ad::scale(ad::mean(ad::log_softmax(logits)), -1.0), -log_k);
}

ad::Var kl_uniform(const ParamVars& params, const Tensor& x, std::size_t num_classes) {
  return kl_uniform_from_logits(forward_graph(params, ad::Var::constant(x)), num_classes);
}

ad::Var discriminator_loss(const ad::Var& real_logits, const ad::Var& fake_logits) {
  const ad::Var real_term = ad::mean(ad::log_sigmoid(real_logits));
  const ad::Var fake_term = ad::mean(ad::log_sigmoid(ad::scale(fake_logits, -1.0)));
  return ad::scale(ad::add(real_term, fake_term), -1.0);
}

ad::Var generator_adversarial_term(const ad::Var& fake_logits) {
  return ad::mean(ad::log_sigmoid(ad::scale(fake_logits, -1.0)));
}

}  // namespace farconf
