#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "farconf/autodiff.hpp"
#include "farconf/tensor.hpp"

namespace farconf {

enum class Activation { relu, sigmoid, tanh };

std::string_view to_string(Activation a);
Activation activation_from_string(std::string_view s);

// Dense MLP shape. `activation` applies to every hidden layer; the output
// layer is always affine (logits).
struct MlpSpec {
  std::size_t input_dim = 2;
  std::vector<std::size_t> hidden_dims = {500, 500};
  std::size_t output_dim = 2;
  Activation activation = Activation::relu;

  std::size_t layer_count() const { return hidden_dims.size() + 1; }
  std::size_t fan_in(std::size_t layer) const;
  std::size_t fan_out(std::size_t layer) const;
  void validate() const;

  friend bool operator==(const MlpSpec&, const MlpSpec&) = default;
};

struct DenseLayer {
  Tensor weight;  // out x in
  Tensor bias;    // {out}

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

// Immutable snapshot of a network's parameters.
struct NetworkParams {
  MlpSpec spec;
  std::vector<DenseLayer> layers;

  std::size_t input_dim() const { return spec.input_dim; }
  std::size_t output_dim() const { return spec.output_dim; }
  std::size_t parameter_count() const;
  // Throws ShapeError if any layer disagrees with `spec`, Error on non-finite values.
  void validate() const;

  friend bool operator==(const NetworkParams&, const NetworkParams&) = default;
};

// Generator maps latent noise to data space; the discriminator emits one
// logit, D(x) = sigmoid(logit).
struct GanSpec {
  std::size_t latent_dim = 16;
  MlpSpec generator{16, {128, 128}, 2, Activation::tanh};
  MlpSpec discriminator{2, {128, 128}, 1, Activation::relu};

  void validate(std::size_t data_dim) const;
};

// Glorot-uniform weights, zero biases.
NetworkParams init_params(const MlpSpec& spec, std::uint64_t seed);

// x: n x input_dim -> n x output_dim pre-softmax logits.
Tensor forward_logits(const NetworkParams& params, const Tensor& x);

// Graph-side view of a parameter snapshot.
struct ParamVars {
  MlpSpec spec;
  std::vector<ad::Var> weights;
  std::vector<ad::Var> biases;

  // Leaves that receive gradients, or constants when `trainable` is false.
  static ParamVars bind(const NetworkParams& params, bool trainable = true);
  // Gradients in layer order: w0, b0, w1, b1, ...
  std::vector<Tensor> grads() const;
  // Leaf handles in the same order as grads().
  std::vector<ad::Var> leaves() const;
  // Copy of the current leaf values.
  NetworkParams snapshot() const;
};

ad::Var forward_graph(const ParamVars& vars, const ad::Var& x);

// Flattened parameter list in layer order w0, b0, w1, b1, ...
std::vector<Tensor> flatten(const NetworkParams& params);
NetworkParams unflatten(const MlpSpec& spec, std::vector<Tensor> tensors);

}  // namespace farconf
