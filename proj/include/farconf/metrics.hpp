#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "farconf/mlp.hpp"
#include "farconf/synth.hpp"

namespace farconf {

// Scores are oriented so that larger means "more OOD".
enum class ScoreMethod { max_prob, entropy, reject_prob };

// A reject head has one extra output after the K in-distribution classes.
enum class HeadKind { plain, reject };

std::string_view to_string(ScoreMethod m);
ScoreMethod score_method_from_string(std::string_view s);

// max_prob: 1 - max_k p_k. entropy: Shannon entropy in nats. reject_prob:
// probability of the reject output. For reject heads, max_prob and entropy
// use the K in-distribution classes renormalised. reject_prob on a plain
// head is a ContractError.
double score_from_logits(std::span<const double> logits, ScoreMethod method, HeadKind head);
double ood_score(const NetworkParams& params, std::span<const double> x, ScoreMethod method,
                 HeadKind head);
std::vector<double> ood_scores(const NetworkParams& params, const Tensor& x, ScoreMethod method,
                               HeadKind head);

// P(ood score > in score) + 0.5 P(equal), over all pairs (Mann-Whitney).
double auroc(std::span<const double> in_scores, std::span<const double> ood_scores);

// Fraction of OOD scores at or below the smallest threshold that keeps at
// least `tpr` of the in-distribution scores.
double fpr_at_tpr(std::span<const double> in_scores, std::span<const double> ood_scores,
                  double tpr = 0.95);

// Per-class share of `n_bins` equal angular sectors (around the class mean,
// in whitened coordinates) holding at least one sample whose Mahalanobis
// distance to that mean lies in `radial_window`.
std::vector<double> angular_coverage(const Tensor& samples, std::span<const GaussianClass> classes,
                                     std::pair<double, double> radial_window, std::size_t n_bins);

}  // namespace farconf
