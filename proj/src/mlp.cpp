#include "farconf/mlp.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "farconf/error.hpp"
#include "farconf/rng.hpp"

namespace farconf {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

constexpr std::size_t kForwardChunk = 4096;

double apply_activation(Activation a, double x) {
  switch (a) {
    case Activation::relu:
      return x > 0.0 ? x : 0.0;
    case Activation::sigmoid:
      return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
    case Activation::tanh:
      return std::tanh(x);
  }
  return x;
}

ad::Var apply_activation(Activation a, const ad::Var& x) {
  switch (a) {
    case Activation::relu:
      return ad::relu(x);
    case Activation::sigmoid:
      return ad::sigmoid(x);
    case Activation::tanh:
      return ad::tanh(x);
  }
  return x;
}

}  // namespace

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::relu:
      return "relu";
    case Activation::sigmoid:
      return "sigmoid";
    case Activation::tanh:
      return "tanh";
  }
  return "relu";
}

Activation activation_from_string(std::string_view s) {
  if (s == "relu") return Activation::relu;
  if (s == "sigmoid") return Activation::sigmoid;
  if (s == "tanh") return Activation::tanh;
  throw ConfigError("unknown activation '" + std::string(s) + "'");
}

std::size_t MlpSpec::fan_in(std::size_t layer) const {
  return layer == 0 ? input_dim : hidden_dims[layer - 1];
}

std::size_t MlpSpec::fan_out(std::size_t layer) const {
  return layer < hidden_dims.size() ? hidden_dims[layer] : output_dim;
}

void MlpSpec::validate() const {
  if (input_dim == 0 || output_dim == 0) throw ConfigError("MLP dimensions must be positive");
  for (auto h : hidden_dims) {
    if (h == 0) throw ConfigError("hidden layer widths must be positive");
  }
}

std::size_t NetworkParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weight.size() + l.bias.size();
  return n;
}

void NetworkParams::validate() const {
  if (layers.size() != spec.layer_count()) {
    throw ShapeError("expected " + std::to_string(spec.layer_count()) + " layers, found " +
                     std::to_string(layers.size()));
  }
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    const std::vector<std::size_t> wshape{spec.fan_out(i), spec.fan_in(i)};
    const std::vector<std::size_t> bshape{spec.fan_out(i)};
    if (l.weight.shape() != wshape || l.bias.shape() != bshape) {
      throw ShapeError("layer " + std::to_string(i) + ": weight " + l.weight.shape_string() +
                       ", bias " + l.bias.shape_string() + " inconsistent with spec");
    }
    if (!l.weight.all_finite() || !l.bias.all_finite()) {
      throw Error("layer " + std::to_string(i) + " holds non-finite parameters");
    }
  }
}

void GanSpec::validate(std::size_t data_dim) const {
  generator.validate();
  discriminator.validate();
  if (generator.input_dim != latent_dim) throw ConfigError("generator input_dim != latent_dim");
  if (generator.output_dim != data_dim) throw ConfigError("generator output_dim != data dimension");
  if (discriminator.input_dim != data_dim || discriminator.output_dim != 1) {
    throw ConfigError("discriminator must map data dimension to a single logit");
  }
}

NetworkParams init_params(const MlpSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng = Rng::stream(seed, "init_params");
  NetworkParams p{spec, {}};
  for (std::size_t i = 0; i < spec.layer_count(); ++i) {
    const std::size_t in = spec.fan_in(i);
    const std::size_t out = spec.fan_out(i);
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    DenseLayer layer{Tensor::matrix(out, in), Tensor({out}, 0.0)};
    for (auto& w : layer.weight.data()) w = rng.uniform(-limit, limit);
    p.layers.push_back(std::move(layer));
  }
  return p;
}

Tensor forward_logits(const NetworkParams& params, const Tensor& x) {
  if (x.cols() != params.input_dim()) {
    throw DimensionError("forward_logits: input has " + std::to_string(x.cols()) +
                         " features, network expects " + std::to_string(params.input_dim()));
  }
  const std::size_t n = x.rows();
  const std::size_t k = params.output_dim();
  Tensor out = Tensor::matrix(n, k);
  const Activation act = params.spec.activation;

  for (std::size_t start = 0; start < n; start += kForwardChunk) {
    const std::size_t m = std::min(kForwardChunk, n - start);
    RowMat h = Eigen::Map<const RowMat>(x.data().data() + start * x.cols(),
                                        static_cast<Eigen::Index>(m),
                                        static_cast<Eigen::Index>(x.cols()));
    for (std::size_t li = 0; li < params.layers.size(); ++li) {
      const auto& layer = params.layers[li];
      Eigen::Map<const RowMat> w(layer.weight.data().data(),
                                 static_cast<Eigen::Index>(layer.weight.rows()),
                                 static_cast<Eigen::Index>(layer.weight.cols()));
      Eigen::Map<const Eigen::RowVectorXd> b(layer.bias.data().data(),
                                             static_cast<Eigen::Index>(layer.bias.size()));
      RowMat next = h * w.transpose();
      next.rowwise() += b;
      if (li + 1 < params.layers.size()) {
        next = next.unaryExpr([act](double v) { return apply_activation(act, v); });
      }
      h = std::move(next);
    }
    std::copy_n(h.data(), m * k, out.data().begin() + static_cast<std::ptrdiff_t>(start * k));
  }
  return out;
}

ParamVars ParamVars::bind(const NetworkParams& params, bool trainable) {
  ParamVars v{params.spec, {}, {}};
  for (const auto& l : params.layers) {
    v.weights.push_back(trainable ? ad::Var::parameter(l.weight) : ad::Var::constant(l.weight));
    v.biases.push_back(trainable ? ad::Var::parameter(l.bias) : ad::Var::constant(l.bias));
  }
  return v;
}

std::vector<Tensor> ParamVars::grads() const {
  std::vector<Tensor> g;
  g.reserve(weights.size() * 2);
  for (std::size_t i = 0; i < weights.size(); ++i) {
    g.push_back(weights[i].grad());
    g.push_back(biases[i].grad());
  }
  return g;
}

std::vector<ad::Var> ParamVars::leaves() const {
  std::vector<ad::Var> out;
  out.reserve(weights.size() * 2);
  for (std::size_t i = 0; i < weights.size(); ++i) {
    out.push_back(weights[i]);
    out.push_back(biases[i]);
  }
  return out;
}

NetworkParams ParamVars::snapshot() const {
  NetworkParams p{spec, {}};
  for (std::size_t i = 0; i < weights.size(); ++i) p.layers.push_back({weights[i].value(), biases[i].value()});
  return p;
}

ad::Var forward_graph(const ParamVars& vars, const ad::Var& x) {
  if (x.value().cols() != vars.spec.input_dim) {
    throw DimensionError("forward_graph: input has " + std::to_string(x.value().cols()) +
                         " features, network expects " + std::to_string(vars.spec.input_dim));
  }
  ad::Var h = x;
  for (std::size_t i = 0; i < vars.weights.size(); ++i) {
    h = ad::linear(h, vars.weights[i], vars.biases[i]);
    if (i + 1 < vars.weights.size()) h = apply_activation(vars.spec.activation, h);
  }
  return h;
}

std::vector<Tensor> flatten(const NetworkParams& params) {
  std::vector<Tensor> out;
  out.reserve(params.layers.size() * 2);
  for (const auto& l : params.layers) {
    out.push_back(l.weight);
    out.push_back(l.bias);
  }
  return out;
}

NetworkParams unflatten(const MlpSpec& spec, std::vector<Tensor> tensors) {
  if (tensors.size() != spec.layer_count() * 2) {
    throw ShapeError("unflatten: expected " + std::to_string(spec.layer_count() * 2) +
                     " tensors, got " + std::to_string(tensors.size()));
  }
  NetworkParams p{spec, {}};
  for (std::size_t i = 0; i < spec.layer_count(); ++i) {
    p.layers.push_back({std::move(tensors[2 * i]), std::move(tensors[2 * i + 1])});
  }
  return p;
}

}  // namespace farconf
