#pragma once

// Asymptotic confidence of ReLU classifiers along rays t -> alpha * t.
//
// A ReLU network is affine on each activation region. Along a ray, the
// region eventually stops changing; on that final region the logits are
// V x + a, so as alpha grows the softmax concentrates on argmax_k <v_k, t>
// (one-hot when unique, softmax of the intercepts over the tied set
// otherwise). The stabilisation scale is certified analytically: with the
// pattern fixed, every hidden pre-activation along the ray is s * alpha + c.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "farconf/mlp.hpp"
#include "farconf/synth.hpp"
#include "farconf/tensor.hpp"

namespace farconf {

// One active/inactive bit per hidden unit, grouped by layer.
struct ActivationPattern {
  std::vector<std::vector<bool>> layers;

  std::size_t unit_count() const;
  std::size_t active_count() const;

  friend bool operator==(const ActivationPattern&, const ActivationPattern&) = default;
};

// logits = slope * x + intercept on one activation region.
struct AffineMap {
  Tensor slope;  // K x d
  std::vector<double> intercept;

  std::vector<double> apply(std::span<const double> x) const;
};

struct RayOptions {
  unsigned alpha_max_log2 = 40;  // doubling search covers alpha in {1, 2, ..., 2^40}
  double tie_tolerance = 1e-9;   // absolute, on slopes
};

struct LimitConfidence {
  std::vector<double> slopes;  // <v_k, direction>
  std::vector<std::size_t> k_star;
  std::vector<double> limit_distribution;
};

struct RayReport {
  std::vector<double> direction;  // unit vector
  double beta = 0.0;              // stabilisation scale; 0 when not certified
  ActivationPattern pattern;
  bool certified = false;
  bool degenerate = false;  // some unit has zero slope and zero offset along the ray
  AffineMap map;
  std::vector<double> slopes;
  std::vector<std::size_t> k_star;
  std::vector<double> limit_distribution;

  bool unique_k_star() const { return certified && k_star.size() == 1; }
  double limit_max_prob() const;
  double limit_entropy() const;
};

// Hidden pre-activations at x, one vector per hidden layer.
std::vector<std::vector<double>> hidden_preactivations(const NetworkParams& params,
                                                       std::span<const double> x);

// Throws UnsupportedActivation for non-ReLU networks. A pre-activation of
// exactly 0 is recorded as inactive.
ActivationPattern activation_pattern(const NetworkParams& params, std::span<const double> x);

// V = W_L D_{L-1} W_{L-1} ... D_1 W_1 and the matching intercept, where D_i
// zeroes the rows of inactive units.
AffineMap affine_map(const NetworkParams& params, const ActivationPattern& pattern);

// Doubling search for the region the ray settles in, then analytic
// certification of that region. Fills direction, beta, pattern, certified,
// degenerate and map; the limit fields are left empty.
RayReport stabilize_ray(const NetworkParams& params, std::span<const double> direction,
                        const RayOptions& options = {});

LimitConfidence limit_confidence(const AffineMap& map, std::span<const double> direction,
                                 double tie_tolerance = 1e-9);

// stabilize_ray followed by limit_confidence on certified rays.
RayReport analyze_ray(const NetworkParams& params, std::span<const double> direction,
                      const RayOptions& options = {});

struct RaySurveySummary {
  std::size_t n_directions = 0;
  double fraction_certified = 0.0;
  double fraction_unique = 0.0;        // of certified rays
  std::vector<std::size_t> k_star_histogram;  // unique-k* counts per class
  double fraction_confident = 0.0;     // certified rays with limit max prob > 0.99
  double mean_limit_entropy = 0.0;     // over certified rays
  // Share of certified rays whose k* is unique and an in-distribution class.
  double fraction_unique_in_class = 0.0;
  // Share of unique-k* rays whose k* is the reject output (reject nets only).
  std::optional<double> fraction_unique_reject;
};

struct RaySurvey {
  std::vector<RayReport> rays;
  RaySurveySummary summary;
};

// Uniform random unit directions from (seed). `reject_index` marks the reject
// output when the network has one.
RaySurvey ray_survey(const NetworkParams& params, std::size_t n_directions, std::uint64_t seed,
                     const RayOptions& options = {},
                     std::optional<std::size_t> reject_index = std::nullopt);

// Reference evaluation used to check the analytic limit: softmax of the
// network at alpha * direction.
std::vector<double> softmax_at(const NetworkParams& params, std::span<const double> direction,
                               double alpha);

double total_variation(std::span<const double> p, std::span<const double> q);

struct ConfidenceGrid {
  Box2 box;
  std::size_t resolution = 0;  // per axis
  // Row-major over (iy, ix): y increases with the row index.
  std::vector<double> max_prob;
  std::vector<double> entropy;
  std::vector<std::size_t> argmax;
  // Largest softmax probability among the first `in_classes` outputs.
  std::vector<double> max_in_class_prob;

  double x_at(std::size_t ix) const;
  double y_at(std::size_t iy) const;
};

// Dense softmax evaluation on a resolution x resolution lattice including the
// box corners. `in_classes` defaults to every output.
ConfidenceGrid grid_confidence(const NetworkParams& params, const Box2& box, std::size_t resolution,
                               std::optional<std::size_t> in_classes = std::nullopt);

}  // namespace farconf
