#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "farconf/tensor.hpp"

namespace farconf {

inline constexpr int kOodLabel = -1;

struct GaussianClass {
  std::vector<double> mean;
  std::vector<double> covariance;  // d x d row-major; must be SPD
  int label = 0;

  std::size_t dim() const { return mean.size(); }
  static GaussianClass isotropic(std::vector<double> mean, int label);
};

// Default in-distribution: identity-covariance Gaussians at (-10, 0) and (10, 0).
std::vector<GaussianClass> two_gaussians();

struct LabeledSample {
  std::vector<double> point;
  int label = kOodLabel;  // class index, or kOodLabel

  bool is_ood() const { return label == kOodLabel; }
};

enum class Provenance { in_dist, boundary_ood, box_ood, gan_ood };

std::string_view to_string(Provenance p);
Provenance provenance_from_string(std::string_view s);

struct Dataset {
  std::vector<LabeledSample> samples;
  Provenance provenance = Provenance::in_dist;
  std::uint64_t seed = 0;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  std::size_t dim() const { return samples.empty() ? 0 : samples.front().point.size(); }
  // n x d matrix of the sample points.
  Tensor points() const;
  std::vector<int> labels() const;
};

struct Box2 {
  std::pair<double, double> x{-50.0, 50.0};
  std::pair<double, double> y{-50.0, 50.0};

  bool contains(double px, double py) const {
    return px >= x.first && px <= x.second && py >= y.first && py <= y.second;
  }
  bool strictly_contains(double px, double py) const {
    return px > x.first && px < x.second && py > y.first && py < y.second;
  }
  double area() const { return (x.second - x.first) * (y.second - y.first); }
};

struct NearestClass {
  double distance = 0.0;
  std::size_t class_index = 0;
};

// Minimum Mahalanobis distance over the classes, ties resolved to the lowest
// index. Throws ConfigError for a non-SPD covariance.
NearestClass mahalanobis_to_nearest(std::span<const double> x, std::span<const GaussianClass> classes);

// Points closer than this to a class mean (in Mahalanobis units) are in-distribution.
inline constexpr double kOodThreshold = 3.0;

Dataset sample_in_distribution(std::span<const GaussianClass> classes, std::size_t n_per_class,
                               std::uint64_t seed);

// Per-class annuli in Mahalanobis units, rejection-resampled so every point
// is at least kOodThreshold from every mean.
Dataset sample_boundary_ood(std::span<const GaussianClass> classes, std::size_t n,
                            std::pair<double, double> radial_band, std::uint64_t seed);

// Uniform over the box minus the in-distribution regions. Throws ConfigError
// if the box does not strictly contain every mean or the acceptance rate
// drops below 1%.
Dataset sample_box_ood(const Box2& box, std::span<const GaussianClass> classes, std::size_t n,
                       std::uint64_t seed);

}  // namespace farconf
