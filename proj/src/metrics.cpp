#include "farconf/metrics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "farconf/error.hpp"
#include "farconf/softmax.hpp"

namespace farconf {

std::string_view to_string(ScoreMethod m) {
  switch (m) {
    case ScoreMethod::max_prob:
      return "max_prob";
    case ScoreMethod::entropy:
      return "entropy";
    case ScoreMethod::reject_prob:
      return "reject_prob";
  }
  return "max_prob";
}

ScoreMethod score_method_from_string(std::string_view s) {
  if (s == "max_prob") return ScoreMethod::max_prob;
  if (s == "entropy") return ScoreMethod::entropy;
  if (s == "reject_prob") return ScoreMethod::reject_prob;
  throw ConfigError("unknown score method '" + std::string(s) + "'");
}

double score_from_logits(std::span<const double> logits, ScoreMethod method, HeadKind head) {
  if (head == HeadKind::reject && logits.size() < 2) {
    throw ContractError("reject head needs at least one in-distribution class");
  }
  if (method == ScoreMethod::reject_prob) {
    if (head != HeadKind::reject) throw ContractError("reject_prob needs a reject-class network");
    return softmax(logits).back();
  }
  const auto in_logits = head == HeadKind::reject ? logits.first(logits.size() - 1) : logits;
  const auto p = softmax(in_logits);
  if (method == ScoreMethod::max_prob) return 1.0 - *std::max_element(p.begin(), p.end());
  return entropy(p);
}

double ood_score(const NetworkParams& params, std::span<const double> x, ScoreMethod method,
                 HeadKind head) {
  Tensor t = Tensor::matrix(1, x.size());
  std::copy(x.begin(), x.end(), t.data().begin());
  return ood_scores(params, t, method, head).front();
}

std::vector<double> ood_scores(const NetworkParams& params, const Tensor& x, ScoreMethod method,
                               HeadKind head) {
  if (method == ScoreMethod::reject_prob && head != HeadKind::reject) {
    throw ContractError("reject_prob needs a reject-class network");
  }
  const Tensor logits = forward_logits(params, x);
  std::vector<double> out(logits.rows());
  for (std::size_t i = 0; i < logits.rows(); ++i) out[i] = score_from_logits(logits.row(i), method, head);
  return out;
}

double auroc(std::span<const double> in_scores, std::span<const double> ood_scores) {
  if (in_scores.empty() || ood_scores.empty()) throw ContractError("auroc: score lists must be nonempty");
  std::vector<double> sorted(in_scores.begin(), in_scores.end());
  std::sort(sorted.begin(), sorted.end());
  // Count of (in, ood) pairs with ood > in, plus half the ties. Each term is a
  // multiple of 1/2 below 2^52, so the sum is exact.
  double wins = 0.0;
  for (double s : ood_scores) {
    const auto lo = std::lower_bound(sorted.begin(), sorted.end(), s);
    const auto hi = std::upper_bound(lo, sorted.end(), s);
    wins += static_cast<double>(lo - sorted.begin()) + 0.5 * static_cast<double>(hi - lo);
  }
  return wins / (static_cast<double>(in_scores.size()) * static_cast<double>(ood_scores.size()));
}

double fpr_at_tpr(std::span<const double> in_scores, std::span<const double> ood_scores, double tpr) {
  if (in_scores.empty() || ood_scores.empty()) throw ContractError("fpr_at_tpr: score lists must be nonempty");
  if (!(tpr > 0.0 && tpr <= 1.0)) throw ContractError("fpr_at_tpr: tpr must lie in (0, 1]");
  std::vector<double> sorted(in_scores.begin(), in_scores.end());
  std::sort(sorted.begin(), sorted.end());
  const auto need = static_cast<std::size_t>(std::ceil(tpr * static_cast<double>(sorted.size()) - 1e-9));
  const double threshold = sorted[std::max<std::size_t>(need, 1) - 1];
  const auto accepted = std::count_if(ood_scores.begin(), ood_scores.end(),
                                      [threshold](double s) { return s <= threshold; });
  return static_cast<double>(accepted) / static_cast<double>(ood_scores.size());
}

std::vector<double> angular_coverage(const Tensor& samples, std::span<const GaussianClass> classes,
                                     std::pair<double, double> radial_window, std::size_t n_bins) {
  if (n_bins < 4) throw ContractError("angular_coverage: need at least 4 bins");
  if (samples.size() > 0 && samples.cols() != 2) throw DimensionError("angular_coverage: samples must be 2-D");
  using Mat2 = Eigen::Matrix2d;
  std::vector<double> coverage;
  for (const auto& c : classes) {
    if (c.dim() != 2) throw DimensionError("angular_coverage: classes must be 2-D");
    const Mat2 cov = Eigen::Map<const Eigen::Matrix<double, 2, 2, Eigen::RowMajor>>(c.covariance.data());
    Eigen::LLT<Mat2> llt(cov);
    if (llt.info() != Eigen::Success) throw ConfigError("angular_coverage: covariance not SPD");
    std::vector<bool> hit(n_bins, false);
    for (std::size_t i = 0; i < samples.rows() && samples.size() > 0; ++i) {
      const Eigen::Vector2d d(samples(i, 0) - c.mean[0], samples(i, 1) - c.mean[1]);
      const Eigen::Vector2d z = llt.matrixL().solve(d);
      const double r = z.norm();
      if (r < radial_window.first || r > radial_window.second) continue;
      const double theta = std::atan2(z[1], z[0]) + std::numbers::pi;  // [0, 2pi]
      auto bin = static_cast<std::size_t>(theta / (2.0 * std::numbers::pi) * static_cast<double>(n_bins));
      hit[std::min(bin, n_bins - 1)] = true;
    }
    coverage.push_back(static_cast<double>(std::count(hit.begin(), hit.end(), true)) /
                       static_cast<double>(n_bins));
  }
  return coverage;
}

}  // namespace farconf
