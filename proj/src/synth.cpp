#include "farconf/synth.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "farconf/error.hpp"
#include "farconf/rng.hpp"

namespace farconf {

namespace {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Mat covariance_of(const GaussianClass& c) {
  const auto d = static_cast<Eigen::Index>(c.dim());
  if (c.covariance.size() != c.dim() * c.dim()) {
    throw ConfigError("covariance of class " + std::to_string(c.label) + " is not " +
                      std::to_string(d) + "x" + std::to_string(d));
  }
  return Eigen::Map<const Mat>(c.covariance.data(), d, d);
}

// Lower Cholesky factor; rejects asymmetric or non-positive-definite input.
Eigen::LLT<Mat> cholesky(const GaussianClass& c) {
  const Mat cov = covariance_of(c);
  if (!cov.isApprox(cov.transpose(), 1e-12)) {
    throw ConfigError("covariance of class " + std::to_string(c.label) + " is not symmetric");
  }
  Eigen::LLT<Mat> llt(cov);
  if (llt.info() != Eigen::Success) {
    throw ConfigError("covariance of class " + std::to_string(c.label) +
                      " is not positive definite");
  }
  return llt;
}

void require_planar(std::span<const GaussianClass> classes, const char* who) {
  for (const auto& c : classes) {
    if (c.dim() != 2) throw ConfigError(std::string(who) + " requires 2-D classes");
  }
}

}  // namespace

GaussianClass GaussianClass::isotropic(std::vector<double> mean, int label) {
  const std::size_t d = mean.size();
  std::vector<double> cov(d * d, 0.0);
  for (std::size_t i = 0; i < d; ++i) cov[i * d + i] = 1.0;
  return {std::move(mean), std::move(cov), label};
}

std::vector<GaussianClass> two_gaussians() {
  return {GaussianClass::isotropic({-10.0, 0.0}, 0), GaussianClass::isotropic({10.0, 0.0}, 1)};
}

std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::in_dist:
      return "in_dist";
    case Provenance::boundary_ood:
      return "boundary_ood";
    case Provenance::box_ood:
      return "box_ood";
    case Provenance::gan_ood:
      return "gan_ood";
  }
  return "in_dist";
}

Provenance provenance_from_string(std::string_view s) {
  if (s == "in_dist") return Provenance::in_dist;
  if (s == "boundary_ood") return Provenance::boundary_ood;
  if (s == "box_ood") return Provenance::box_ood;
  if (s == "gan_ood") return Provenance::gan_ood;
  throw ConfigError("unknown provenance '" + std::string(s) + "'");
}

Tensor Dataset::points() const {
  const std::size_t d = dim();
  Tensor t = Tensor::matrix(samples.size(), d);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].point.size() != d) throw DimensionError("dataset has mixed dimensions");
    for (std::size_t j = 0; j < d; ++j) t(i, j) = samples[i].point[j];
  }
  return t;
}

std::vector<int> Dataset::labels() const {
  std::vector<int> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.label);
  return out;
}

NearestClass mahalanobis_to_nearest(std::span<const double> x,
                                    std::span<const GaussianClass> classes) {
  if (classes.empty()) throw ContractError("mahalanobis_to_nearest: no classes");
  NearestClass best{std::numeric_limits<double>::infinity(), 0};
  for (std::size_t k = 0; k < classes.size(); ++k) {
    const auto& c = classes[k];
    if (c.dim() != x.size()) throw DimensionError("point and class mean differ in dimension");
    Eigen::VectorXd diff(static_cast<Eigen::Index>(x.size()));
    for (std::size_t i = 0; i < x.size(); ++i) diff[static_cast<Eigen::Index>(i)] = x[i] - c.mean[i];
    // |L^{-1} (x - mu)| = sqrt((x-mu)^T Sigma^{-1} (x-mu))
    const auto llt = cholesky(c);
    const Eigen::VectorXd z = llt.matrixL().solve(diff);
    const double dist = z.norm();
    if (dist < best.distance) best = {dist, k};
  }
  return best;
}

Dataset sample_in_distribution(std::span<const GaussianClass> classes, std::size_t n_per_class,
                               std::uint64_t seed) {
  if (n_per_class < 1) throw ContractError("sample_in_distribution: n_per_class must be >= 1");
  Rng rng = Rng::stream(seed, "in_distribution");
  Dataset ds{{}, Provenance::in_dist, seed};
  ds.samples.reserve(classes.size() * n_per_class);
  for (const auto& c : classes) {
    const auto llt = cholesky(c);
    const Mat lower = llt.matrixL();
    const auto d = static_cast<Eigen::Index>(c.dim());
    for (std::size_t i = 0; i < n_per_class; ++i) {
      Eigen::VectorXd z(d);
      for (Eigen::Index j = 0; j < d; ++j) z[j] = rng.normal();
      const Eigen::VectorXd offset = lower * z;
      LabeledSample s{c.mean, c.label};
      for (Eigen::Index j = 0; j < d; ++j) s.point[static_cast<std::size_t>(j)] += offset[j];
      ds.samples.push_back(std::move(s));
    }
  }
  return ds;
}

Dataset sample_boundary_ood(std::span<const GaussianClass> classes, std::size_t n,
                            std::pair<double, double> radial_band, std::uint64_t seed) {
  const auto [r_lo, r_hi] = radial_band;
  if (!(r_lo >= kOodThreshold && r_lo < r_hi)) {
    throw ContractError("sample_boundary_ood: radial band must satisfy 3 <= r_lo < r_hi");
  }
  if (classes.empty()) throw ContractError("sample_boundary_ood: no classes");
  require_planar(classes, "sample_boundary_ood");

  std::vector<Mat> lowers;
  for (const auto& c : classes) lowers.push_back(cholesky(c).matrixL());

  Rng rng = Rng::stream(seed, "boundary_ood");
  Dataset ds{{}, Provenance::boundary_ood, seed};
  ds.samples.reserve(n);
  const std::size_t max_attempts = 1000 * (n + 1);
  std::size_t attempts = 0;
  while (ds.samples.size() < n) {
    if (++attempts > max_attempts) {
      throw ConfigError("sample_boundary_ood: band lies inside the in-distribution region");
    }
    const std::size_t k = static_cast<std::size_t>(rng.below(classes.size()));
    const double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double r = rng.uniform(r_lo, r_hi);
    const Eigen::Vector2d u(r * std::cos(theta), r * std::sin(theta));
    const Eigen::Vector2d off = lowers[k] * u;
    std::vector<double> p{classes[k].mean[0] + off[0], classes[k].mean[1] + off[1]};
    if (mahalanobis_to_nearest(p, classes).distance < kOodThreshold) continue;
    ds.samples.push_back({std::move(p), kOodLabel});
  }
  return ds;
}

Dataset sample_box_ood(const Box2& box, std::span<const GaussianClass> classes, std::size_t n,
                       std::uint64_t seed) {
  require_planar(classes, "sample_box_ood");
  for (const auto& c : classes) {
    if (!box.strictly_contains(c.mean[0], c.mean[1])) {
      throw ConfigError("sample_box_ood: box must strictly contain every class mean");
    }
  }
  constexpr std::size_t kMinAttemptsForRate = 1000;
  constexpr double kMinAcceptance = 0.01;

  Rng rng = Rng::stream(seed, "box_ood");
  Dataset ds{{}, Provenance::box_ood, seed};
  ds.samples.reserve(n);
  std::size_t attempts = 0;
  while (ds.samples.size() < n) {
    ++attempts;
    std::vector<double> p{rng.uniform(box.x.first, box.x.second),
                          rng.uniform(box.y.first, box.y.second)};
    if (mahalanobis_to_nearest(p, classes).distance >= kOodThreshold) {
      ds.samples.push_back({std::move(p), kOodLabel});
    }
    if (attempts >= kMinAttemptsForRate &&
        static_cast<double>(ds.samples.size()) < kMinAcceptance * static_cast<double>(attempts)) {
      throw ConfigError("sample_box_ood: acceptance rate below 1%, box is degenerate");
    }
  }
  return ds;
}

}  // namespace farconf
