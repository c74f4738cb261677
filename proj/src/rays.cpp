#include "farconf/rays.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>

#include "farconf/error.hpp"
#include "farconf/rng.hpp"
#include "farconf/softmax.hpp"

namespace farconf {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const RowMat> weight_map(const DenseLayer& l) {
  return Eigen::Map<const RowMat>(l.weight.data().data(), static_cast<Eigen::Index>(l.weight.rows()),
                                  static_cast<Eigen::Index>(l.weight.cols()));
}

Eigen::Map<const Eigen::VectorXd> bias_map(const DenseLayer& l) {
  return Eigen::Map<const Eigen::VectorXd>(l.bias.data().data(),
                                           static_cast<Eigen::Index>(l.bias.size()));
}

void require_relu(const NetworkParams& params) {
  if (!params.spec.hidden_dims.empty() && params.spec.activation != Activation::relu) {
    throw UnsupportedActivation("ray analysis needs a ReLU network, got " +
                                std::string(to_string(params.spec.activation)));
  }
}

std::vector<double> unit_vector(std::span<const double> direction, std::size_t dim) {
  if (direction.size() != dim) {
    throw DimensionError("direction has " + std::to_string(direction.size()) +
                         " components, network input has " + std::to_string(dim));
  }
  double norm = 0.0;
  for (double v : direction) norm += v * v;
  norm = std::sqrt(norm);
  if (!(norm > 0.0) || !std::isfinite(norm)) throw ContractError("direction must be a nonzero finite vector");
  std::vector<double> u(direction.begin(), direction.end());
  for (auto& v : u) v /= norm;
  return u;
}

struct Certification {
  bool holds = true;
  bool degenerate = false;
};

// With `pattern` fixed, propagate the slope s and offset c of each hidden
// pre-activation along alpha * u and check every unit keeps its sign for all
// larger alpha.
Certification certify(const NetworkParams& params, const ActivationPattern& pattern,
                      std::span<const double> u) {
  Certification cert;
  Eigen::VectorXd s = Eigen::Map<const Eigen::VectorXd>(u.data(), static_cast<Eigen::Index>(u.size()));
  Eigen::VectorXd c = Eigen::VectorXd::Zero(s.size());
  for (std::size_t li = 0; li + 1 < params.layers.size(); ++li) {
    const auto& layer = params.layers[li];
    Eigen::VectorXd ns = weight_map(layer) * s;
    Eigen::VectorXd nc = weight_map(layer) * c + bias_map(layer);
    const auto& bits = pattern.layers[li];
    for (Eigen::Index i = 0; i < ns.size(); ++i) {
      const double su = ns[i];
      const double cu = nc[i];
      const bool active = bits[static_cast<std::size_t>(i)];
      if (su == 0.0 && cu == 0.0) cert.degenerate = true;
      const bool ok = active ? (su > 0.0 || (su == 0.0 && cu > 0.0))
                             : (su < 0.0 || (su == 0.0 && cu <= 0.0));
      if (!ok) cert.holds = false;
      if (!active) {
        ns[i] = 0.0;
        nc[i] = 0.0;
      }
    }
    s = std::move(ns);
    c = std::move(nc);
  }
  return cert;
}

}  // namespace

std::size_t ActivationPattern::unit_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.size();
  return n;
}

std::size_t ActivationPattern::active_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += static_cast<std::size_t>(std::count(l.begin(), l.end(), true));
  return n;
}

std::vector<double> AffineMap::apply(std::span<const double> x) const {
  if (x.size() != slope.cols()) throw DimensionError("AffineMap::apply: dimension mismatch");
  std::vector<double> out(intercept);
  for (std::size_t k = 0; k < slope.rows(); ++k) {
    for (std::size_t j = 0; j < x.size(); ++j) out[k] += slope(k, j) * x[j];
  }
  return out;
}

double RayReport::limit_max_prob() const {
  if (limit_distribution.empty()) return 0.0;
  return *std::max_element(limit_distribution.begin(), limit_distribution.end());
}

double RayReport::limit_entropy() const { return entropy(limit_distribution); }

std::vector<std::vector<double>> hidden_preactivations(const NetworkParams& params,
                                                       std::span<const double> x) {
  if (x.size() != params.input_dim()) throw DimensionError("hidden_preactivations: input dimension mismatch");
  std::vector<std::vector<double>> out;
  Eigen::VectorXd h = Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
  for (std::size_t li = 0; li + 1 < params.layers.size(); ++li) {
    const auto& layer = params.layers[li];
    Eigen::VectorXd pre = weight_map(layer) * h + bias_map(layer);
    out.emplace_back(pre.data(), pre.data() + pre.size());
    switch (params.spec.activation) {
      case Activation::relu:
        h = pre.cwiseMax(0.0);
        break;
      case Activation::sigmoid:
        h = pre.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
        break;
      case Activation::tanh:
        h = pre.array().tanh().matrix();
        break;
    }
  }
  return out;
}

ActivationPattern activation_pattern(const NetworkParams& params, std::span<const double> x) {
  require_relu(params);
  ActivationPattern p;
  for (const auto& pre : hidden_preactivations(params, x)) {
    std::vector<bool> bits(pre.size());
    for (std::size_t i = 0; i < pre.size(); ++i) bits[i] = pre[i] > 0.0;
    p.layers.push_back(std::move(bits));
  }
  return p;
}

AffineMap affine_map(const NetworkParams& params, const ActivationPattern& pattern) {
  require_relu(params);
  if (pattern.layers.size() + 1 != params.layers.size()) {
    throw DimensionError("affine_map: pattern has " + std::to_string(pattern.layers.size()) +
                         " layers, network has " + std::to_string(params.layers.size() - 1) +
                         " hidden layers");
  }
  RowMat v = weight_map(params.layers[0]);
  Eigen::VectorXd a = bias_map(params.layers[0]);
  for (std::size_t li = 1; li < params.layers.size(); ++li) {
    const auto& bits = pattern.layers[li - 1];
    if (bits.size() != static_cast<std::size_t>(v.rows())) {
      throw DimensionError("affine_map: pattern layer " + std::to_string(li - 1) + " has wrong width");
    }
    for (Eigen::Index i = 0; i < v.rows(); ++i) {
      if (!bits[static_cast<std::size_t>(i)]) {
        v.row(i).setZero();
        a[i] = 0.0;
      }
    }
    RowMat nv = weight_map(params.layers[li]) * v;
    Eigen::VectorXd na = weight_map(params.layers[li]) * a + bias_map(params.layers[li]);
    v = std::move(nv);
    a = std::move(na);
  }
  AffineMap m;
  m.slope = Tensor::matrix(static_cast<std::size_t>(v.rows()), static_cast<std::size_t>(v.cols()));
  std::copy_n(v.data(), v.size(), m.slope.data().begin());
  m.intercept.assign(a.data(), a.data() + a.size());
  return m;
}

RayReport stabilize_ray(const NetworkParams& params, std::span<const double> direction,
                        const RayOptions& options) {
  require_relu(params);
  RayReport report;
  report.direction = unit_vector(direction, params.input_dim());
  const auto& u = report.direction;

  std::vector<double> x(u.size());
  ActivationPattern previous;
  double run_start = 1.0;  // smallest tested alpha of the current run of equal patterns
  for (unsigned j = 0; j <= options.alpha_max_log2; ++j) {
    const double alpha = std::ldexp(1.0, static_cast<int>(j));
    for (std::size_t i = 0; i < u.size(); ++i) x[i] = alpha * u[i];
    ActivationPattern current = activation_pattern(params, x);
    if (j == 0 || !(current == previous)) {
      run_start = alpha;
      previous = std::move(current);
      continue;
    }
    const Certification cert = certify(params, current, u);
    if (cert.holds) {
      report.certified = true;
      report.degenerate = cert.degenerate;
      report.beta = run_start;
      report.pattern = std::move(current);
      report.map = affine_map(params, report.pattern);
      return report;
    }
  }
  report.pattern = std::move(previous);
  return report;
}

LimitConfidence limit_confidence(const AffineMap& map, std::span<const double> direction,
                                 double tie_tolerance) {
  const auto u = unit_vector(direction, map.slope.cols());
  const std::size_t k = map.slope.rows();
  LimitConfidence out;
  out.slopes.assign(k, 0.0);
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t j = 0; j < u.size(); ++j) out.slopes[c] += map.slope(c, j) * u[j];
  }
  const double best = *std::max_element(out.slopes.begin(), out.slopes.end());
  for (std::size_t c = 0; c < k; ++c) {
    if (out.slopes[c] >= best - tie_tolerance) out.k_star.push_back(c);
  }
  out.limit_distribution.assign(k, 0.0);
  if (out.k_star.size() == 1) {
    out.limit_distribution[out.k_star.front()] = 1.0;
  } else {
    std::vector<double> tied;
    for (auto c : out.k_star) tied.push_back(map.intercept[c]);
    const auto p = softmax(tied);
    for (std::size_t i = 0; i < out.k_star.size(); ++i) out.limit_distribution[out.k_star[i]] = p[i];
  }
  return out;
}

RayReport analyze_ray(const NetworkParams& params, std::span<const double> direction,
                      const RayOptions& options) {
  RayReport r = stabilize_ray(params, direction, options);
  if (r.certified) {
    auto lim = limit_confidence(r.map, r.direction, options.tie_tolerance);
    r.slopes = std::move(lim.slopes);
    r.k_star = std::move(lim.k_star);
    r.limit_distribution = std::move(lim.limit_distribution);
  }
  return r;
}

RaySurvey ray_survey(const NetworkParams& params, std::size_t n_directions, std::uint64_t seed,
                     const RayOptions& options, std::optional<std::size_t> reject_index) {
  if (n_directions < 1) throw ContractError("ray_survey: need at least one direction");
  const std::size_t k = params.output_dim();
  if (reject_index && *reject_index >= k) throw ContractError("ray_survey: reject index out of range");
  const std::size_t in_classes = reject_index ? *reject_index : k;

  Rng rng = Rng::stream(seed, "ray_survey");
  RaySurvey survey;
  survey.rays.reserve(n_directions);
  auto& s = survey.summary;
  s.n_directions = n_directions;
  s.k_star_histogram.assign(k, 0);

  std::size_t certified = 0, unique = 0, confident = 0, unique_in = 0, unique_reject = 0;
  double entropy_sum = 0.0;
  std::vector<double> dir(params.input_dim());
  for (std::size_t i = 0; i < n_directions; ++i) {
    double norm = 0.0;
    do {
      norm = 0.0;
      for (auto& v : dir) {
        v = rng.normal();
        norm += v * v;
      }
    } while (norm == 0.0);
    RayReport r = analyze_ray(params, dir, options);
    if (r.certified) {
      ++certified;
      entropy_sum += r.limit_entropy();
      if (r.limit_max_prob() > 0.99) ++confident;
      if (r.unique_k_star()) {
        ++unique;
        const std::size_t ks = r.k_star.front();
        ++s.k_star_histogram[ks];
        if (ks < in_classes) ++unique_in;
        if (reject_index && ks == *reject_index) ++unique_reject;
      }
    }
    survey.rays.push_back(std::move(r));
  }
  const auto frac = [](std::size_t a, std::size_t b) {
    return b ? static_cast<double>(a) / static_cast<double>(b) : 0.0;
  };
  s.fraction_certified = frac(certified, n_directions);
  s.fraction_unique = frac(unique, certified);
  s.fraction_confident = frac(confident, certified);
  s.mean_limit_entropy = certified ? entropy_sum / static_cast<double>(certified) : 0.0;
  s.fraction_unique_in_class = frac(unique_in, certified);
  if (reject_index) s.fraction_unique_reject = frac(unique_reject, unique);
  return survey;
}

std::vector<double> softmax_at(const NetworkParams& params, std::span<const double> direction,
                               double alpha) {
  Tensor x = Tensor::matrix(1, direction.size());
  for (std::size_t i = 0; i < direction.size(); ++i) x[i] = alpha * direction[i];
  const Tensor logits = forward_logits(params, x);
  return softmax(logits.row(0));
}

double total_variation(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw DimensionError("total_variation: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(p[i] - q[i]);
  return 0.5 * s;
}

double ConfidenceGrid::x_at(std::size_t ix) const {
  return box.x.first + (box.x.second - box.x.first) * static_cast<double>(ix) /
                           static_cast<double>(resolution - 1);
}

double ConfidenceGrid::y_at(std::size_t iy) const {
  return box.y.first + (box.y.second - box.y.first) * static_cast<double>(iy) /
                           static_cast<double>(resolution - 1);
}

ConfidenceGrid grid_confidence(const NetworkParams& params, const Box2& box, std::size_t resolution,
                               std::optional<std::size_t> in_classes) {
  if (resolution < 2) throw ContractError("grid_confidence: resolution must be at least 2");
  if (params.input_dim() != 2) throw DimensionError("grid_confidence: network input must be 2-D");
  const std::size_t k = params.output_dim();
  const std::size_t kin = in_classes.value_or(k);
  if (kin == 0 || kin > k) throw ContractError("grid_confidence: bad in-class count");

  ConfidenceGrid g;
  g.box = box;
  g.resolution = resolution;
  const std::size_t n = resolution * resolution;
  Tensor x = Tensor::matrix(n, 2);
  for (std::size_t iy = 0; iy < resolution; ++iy) {
    for (std::size_t ix = 0; ix < resolution; ++ix) {
      x(iy * resolution + ix, 0) = g.x_at(ix);
      x(iy * resolution + ix, 1) = g.y_at(iy);
    }
  }
  const Tensor logits = forward_logits(params, x);
  g.max_prob.resize(n);
  g.entropy.resize(n);
  g.argmax.resize(n);
  g.max_in_class_prob.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto p = softmax(logits.row(i));
    g.argmax[i] = argmax(p);
    g.max_prob[i] = p[g.argmax[i]];
    g.entropy[i] = entropy(p);
    g.max_in_class_prob[i] = *std::max_element(p.begin(), p.begin() + static_cast<std::ptrdiff_t>(kin));
  }
  return g;
}

}  // namespace farconf
