#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "farconf/error.hpp"
#include "farconf/metrics.hpp"
#include "farconf/rng.hpp"
#include "farconf/softmax.hpp"
#include "support/gradcheck.hpp"

using namespace farconf;

namespace {

// All-pairs Mann-Whitney count.
double auroc_pairs(const std::vector<double>& in, const std::vector<double>& ood) {
  double wins = 0.0;
  for (double o : ood) {
    for (double i : in) wins += o > i ? 1.0 : (o == i ? 0.5 : 0.0);
  }
  return wins / static_cast<double>(in.size() * ood.size());
}

}  // namespace

TEST(Score, UniformOutput) {
  const double z[] = {0.0, 0.0};
  EXPECT_NEAR(score_from_logits(z, ScoreMethod::entropy, HeadKind::plain), std::numbers::ln2, 1e-15);
  EXPECT_NEAR(score_from_logits(z, ScoreMethod::max_prob, HeadKind::plain), 0.5, 1e-15);
}

TEST(Score, OneHotOutput) {
  const double z[] = {800.0, 0.0, 0.0};
  EXPECT_EQ(score_from_logits(z, ScoreMethod::entropy, HeadKind::plain), 0.0);
  EXPECT_EQ(score_from_logits(z, ScoreMethod::max_prob, HeadKind::plain), 0.0);
}

TEST(Score, EntropyMatchesDirectSum) {
  Rng rng(4);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> z(5);
    for (auto& v : z) v = 3.0 * rng.normal();
    double norm = 0.0;
    for (double v : z) norm += std::exp(v);
    double h = 0.0;
    for (double v : z) {
      const double p = std::exp(v) / norm;
      h -= p * std::log(p);
    }
    EXPECT_NEAR(score_from_logits(z, ScoreMethod::entropy, HeadKind::plain), h, 1e-13);
  }
}

TEST(Score, RejectHeadRenormalisesInClasses) {
  const double z[] = {std::log(3.0), 0.0, 5.0};
  // in-classes renormalised: (0.75, 0.25)
  EXPECT_NEAR(score_from_logits(z, ScoreMethod::max_prob, HeadKind::reject), 0.25, 1e-15);
  const double h = -(0.75 * std::log(0.75) + 0.25 * std::log(0.25));
  EXPECT_NEAR(score_from_logits(z, ScoreMethod::entropy, HeadKind::reject), h, 1e-15);
  const double pr = std::exp(5.0) / (3.0 + 1.0 + std::exp(5.0));
  EXPECT_NEAR(score_from_logits(z, ScoreMethod::reject_prob, HeadKind::reject), pr, 1e-15);
}

TEST(Score, RejectProbOnPlainHeadIsContractError) {
  const double z[] = {1.0, 2.0};
  EXPECT_THROW(score_from_logits(z, ScoreMethod::reject_prob, HeadKind::plain), ContractError);
  const NetworkParams p = init_params(MlpSpec{2, {3}, 2, Activation::relu}, 0);
  EXPECT_THROW(ood_scores(p, Tensor::matrix(2, 2), ScoreMethod::reject_prob, HeadKind::plain), ContractError);
}

TEST(Score, BatchMatchesSinglePoint) {
  const NetworkParams p = farconf::testing::random_net(MlpSpec{2, {8}, 3, Activation::relu}, 3);
  const Tensor x = Tensor::from_rows({{1, 2}, {-4, 0.5}});
  const auto s = ood_scores(p, x, ScoreMethod::entropy, HeadKind::plain);
  EXPECT_EQ(s[1], ood_score(p, x.row(1), ScoreMethod::entropy, HeadKind::plain));
}

TEST(Auroc, Examples) {
  EXPECT_EQ(auroc(std::vector<double>{0.1, 0.2}, std::vector<double>{0.8, 0.9}), 1.0);
  EXPECT_EQ(auroc(std::vector<double>{0.3, 0.3, 0.3}, std::vector<double>{0.3, 0.3}), 0.5);
  EXPECT_EQ(auroc(std::vector<double>{0.1, 0.5}, std::vector<double>{0.3, 0.7}), 0.75);
  EXPECT_THROW(auroc(std::vector<double>{}, std::vector<double>{1.0}), ContractError);
  EXPECT_THROW(auroc(std::vector<double>{1.0}, std::vector<double>{}), ContractError);
}

TEST(Auroc, MatchesAllPairsOracleExactly) {
  Rng rng(8);
  for (int t = 0; t < 500; ++t) {
    const std::size_t n = 1 + rng.below(50), m = 1 + rng.below(50);
    std::vector<double> in(n), ood(m);
    // coarse values so ties are common
    for (auto& v : in) v = static_cast<double>(rng.below(10)) / 4.0;
    for (auto& v : ood) v = static_cast<double>(rng.below(10)) / 4.0 + 0.5;
    EXPECT_EQ(auroc(in, ood), auroc_pairs(in, ood));
  }
}

TEST(Auroc, SwappedRolesAreComplementary) {
  Rng rng(9);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> a(1 + rng.below(40)), b(1 + rng.below(40));
    for (auto& v : a) v = static_cast<double>(rng.below(6));
    for (auto& v : b) v = static_cast<double>(rng.below(6));
    EXPECT_NEAR(auroc(a, b) + auroc(b, a), 1.0, 1e-15);
  }
}

TEST(Auroc, EntropyAndMaxProbAgreeForTwoClasses) {
  const NetworkParams p = farconf::testing::random_net(MlpSpec{2, {16}, 2, Activation::relu}, 5);
  Rng rng(1);
  const Tensor in = farconf::testing::random_matrix(rng, 300, 2, 3.0);
  const Tensor ood = farconf::testing::random_matrix(rng, 300, 2, 20.0);
  const double a = auroc(ood_scores(p, in, ScoreMethod::entropy, HeadKind::plain),
                         ood_scores(p, ood, ScoreMethod::entropy, HeadKind::plain));
  const double b = auroc(ood_scores(p, in, ScoreMethod::max_prob, HeadKind::plain),
                         ood_scores(p, ood, ScoreMethod::max_prob, HeadKind::plain));
  EXPECT_NEAR(a, b, 1e-12);
}

TEST(FprAtTpr, Examples) {
  // threshold keeps 95% of in: the 19th of 20 sorted in-scores
  std::vector<double> in(20);
  for (int i = 0; i < 20; ++i) in[i] = i;
  EXPECT_EQ(fpr_at_tpr(in, std::vector<double>{100, 200}), 0.0);
  EXPECT_EQ(fpr_at_tpr(in, std::vector<double>{18, 18.5, 19, -1}), 0.5);
  EXPECT_EQ(fpr_at_tpr(in, std::vector<double>{0, 1}), 1.0);
  EXPECT_THROW(fpr_at_tpr(in, std::vector<double>{}), ContractError);
  EXPECT_THROW(fpr_at_tpr(in, std::vector<double>{1}, 0.0), ContractError);
}

TEST(Coverage, FullRing) {
  const auto classes = two_gaussians();
  Rng rng(3);
  Tensor s = Tensor::matrix(4000, 2);
  for (std::size_t i = 0; i < 4000; ++i) {
    const double th = rng.uniform(0, 2 * std::numbers::pi);
    const double cx = i % 2 ? 10.0 : -10.0;
    s(i, 0) = cx + 4.0 * std::cos(th);
    s(i, 1) = 4.0 * std::sin(th);
  }
  const auto c = angular_coverage(s, classes, {3, 6}, 36);
  ASSERT_EQ(c.size(), 2u);
  EXPECT_EQ(c[0], 1.0);
  EXPECT_EQ(c[1], 1.0);
}

TEST(Coverage, SingleAngleAndEmptyWindow) {
  const auto classes = two_gaussians();
  Tensor s = Tensor::from_rows({{14, 0.5}, {14.5, 0.52}, {15, 0.55}});
  const auto c = angular_coverage(s, classes, {3, 6}, 36);
  EXPECT_EQ(c[0], 0.0);
  EXPECT_DOUBLE_EQ(c[1], 1.0 / 36.0);
  const auto none = angular_coverage(Tensor::from_rows({{40, 40}}), classes, {3, 6}, 36);
  EXPECT_EQ(none[0], 0.0);
  EXPECT_EQ(none[1], 0.0);
  EXPECT_THROW(angular_coverage(s, classes, {3, 6}, 3), ContractError);
}

TEST(Coverage, InvariantUnderGlobalRotation) {
  const auto classes = two_gaussians();
  Rng rng(12);
  Tensor s = Tensor::matrix(60, 2);
  for (std::size_t i = 0; i < 60; ++i) {
    // angles at bin centres so rotation by whole bins cannot move a sample across an edge
    const double th = (static_cast<double>(rng.below(36)) + 0.5) * 2 * std::numbers::pi / 36;
    const double cx = i % 3 ? 10.0 : -10.0;
    s(i, 0) = cx + 4.5 * std::cos(th);
    s(i, 1) = 4.5 * std::sin(th);
  }
  const auto base = angular_coverage(s, classes, {3, 6}, 36);
  for (int quarter = 1; quarter < 4; ++quarter) {
    const double a = quarter * std::numbers::pi / 2;
    const double ca = std::cos(a), sa = std::sin(a);
    auto rot = [&](double x, double y) { return std::pair{ca * x - sa * y, sa * x + ca * y}; };
    std::vector<GaussianClass> rc;
    for (const auto& c : classes) {
      auto [x, y] = rot(c.mean[0], c.mean[1]);
      rc.push_back(GaussianClass::isotropic({x, y}, c.label));
    }
    Tensor rs = s;
    for (std::size_t i = 0; i < 60; ++i) {
      auto [x, y] = rot(s(i, 0), s(i, 1));
      rs(i, 0) = x;
      rs(i, 1) = y;
    }
    const auto rotated = angular_coverage(rs, rc, {3, 6}, 36);
    EXPECT_EQ(rotated, base) << quarter;
  }
}
