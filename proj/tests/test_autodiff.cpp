#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "farconf/autodiff.hpp"
#include "farconf/error.hpp"
#include "farconf/rng.hpp"
#include "support/gradcheck.hpp"

using namespace farconf;
using farconf::testing::check_gradients;
using farconf::testing::random_matrix;

TEST(Tensor, ShapeMustMatchData) {
  EXPECT_THROW(Tensor({2, 3}, std::vector<double>(5)), DimensionError);
  Tensor t({2, 3}, std::vector<double>{1, 2, 3, 4, 5, 6});
  EXPECT_EQ(t.rows(), 2u);
  EXPECT_EQ(t.cols(), 3u);
  EXPECT_DOUBLE_EQ(t(1, 2), 6.0);
  EXPECT_EQ(t.shape_string(), "(2, 3)");
}

TEST(Tensor, SliceAndGather) {
  Tensor t = Tensor::from_rows({{1, 2}, {3, 4}, {5, 6}});
  EXPECT_EQ(slice_rows(t, 1, 2), Tensor::from_rows({{3, 4}, {5, 6}}));
  const std::size_t idx[] = {2, 0};
  EXPECT_EQ(gather_rows(t, idx), Tensor::from_rows({{5, 6}, {1, 2}}));
  EXPECT_THROW(slice_rows(t, 2, 2), DimensionError);
}

TEST(Tensor, FiniteCheck) {
  Tensor t = Tensor::from_rows({{1, 2}});
  EXPECT_TRUE(t.all_finite());
  t[1] = std::nan("");
  EXPECT_FALSE(t.all_finite());
}

TEST(Matmul, IdentityAndScalar) {
  auto a = ad::Var::constant(Tensor::from_rows({{1, 0}, {0, 1}}));
  auto b = ad::Var::constant(Tensor::from_rows({{3}, {4}}));
  EXPECT_EQ(ad::matmul(a, b).value(), Tensor::from_rows({{3}, {4}}));
  auto c = ad::matmul(ad::Var::constant(Tensor::scalar(2)), ad::Var::constant(Tensor::scalar(5)));
  EXPECT_DOUBLE_EQ(c.value().item(), 10.0);
}

TEST(Matmul, InnerDimensionMismatch) {
  auto a = ad::Var::constant(Tensor::matrix(2, 3));
  auto b = ad::Var::constant(Tensor::matrix(2, 3));
  EXPECT_THROW(ad::matmul(a, b), DimensionError);
}

TEST(Matmul, GradOfSumIsOnesTimesBTransposed) {
  Rng rng(11);
  Tensor av = random_matrix(rng, 3, 4);
  Tensor bv = random_matrix(rng, 4, 2);
  auto a = ad::Var::parameter(av);
  auto b = ad::Var::constant(bv);
  ad::backward(ad::sum(ad::matmul(a, b)));
  const Tensor g = a.grad();
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t k = 0; k < 4; ++k) {
      EXPECT_NEAR(g(i, k), bv(k, 0) + bv(k, 1), 1e-14);
    }
  }
  auto r = check_gradients({av, bv}, [](const std::vector<ad::Var>& v) {
    return ad::sum(ad::matmul(v[0], v[1]));
  });
  EXPECT_LT(r.max_rel_err, 1e-5);
}

TEST(Activations, Values) {
  auto x = ad::Var::constant(Tensor::from_rows({{-1, 0, 2}}));
  EXPECT_EQ(ad::relu(x).value(), Tensor::from_rows({{0, 0, 2}}));
  EXPECT_DOUBLE_EQ(ad::sigmoid(ad::Var::constant(Tensor::scalar(0))).value().item(), 0.5);
  EXPECT_DOUBLE_EQ(ad::tanh(ad::Var::constant(Tensor::scalar(0))).value().item(), 0.0);
  // no overflow at the tails
  auto big = ad::sigmoid(ad::Var::constant(Tensor::from_rows({{-800, 800}})));
  EXPECT_EQ(big.value()[0], 0.0);
  EXPECT_EQ(big.value()[1], 1.0);
}

TEST(Activations, ReluGradIsSignIndicator) {
  auto x = ad::Var::parameter(Tensor::from_rows({{-1, 2}}));
  ad::backward(ad::sum(ad::relu(x)));
  EXPECT_EQ(x.grad(), Tensor::from_rows({{0, 1}}));
}

TEST(Activations, ReluGradAtZeroIsZero) {
  auto x = ad::Var::parameter(Tensor::from_rows({{0.0}}));
  ad::backward(ad::sum(ad::relu(x)));
  EXPECT_EQ(x.grad()[0], 0.0);
}

TEST(LogSoftmax, Symmetric) {
  auto y = ad::log_softmax(ad::Var::constant(Tensor::from_rows({{0, 0}})));
  EXPECT_NEAR(y.value()[0], std::log(0.5), 1e-15);
  EXPECT_NEAR(y.value()[1], std::log(0.5), 1e-15);
}

TEST(LogSoftmax, LargeLogitsDoNotOverflow) {
  auto y = ad::log_softmax(ad::Var::constant(Tensor::from_rows({{1000, 0}})));
  EXPECT_TRUE(y.value().all_finite());
  EXPECT_NEAR(y.value()[0], 0.0, 1e-300);
  EXPECT_NEAR(y.value()[1], -1000.0, 1e-12);
}

TEST(LogSoftmax, MatchesNaiveSummationAtSmallMagnitude) {
  auto y = ad::log_softmax(ad::Var::constant(Tensor::from_rows({{1, 2, 3}})));
  const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  for (int k = 0; k < 3; ++k) EXPECT_NEAR(y.value()[k], (k + 1) - std::log(z), 1e-14);
  double s = 0.0;
  for (double v : y.value().data()) s += std::exp(v);
  EXPECT_NEAR(s, 1.0, 1e-12);
}

TEST(LogSoftmax, RowsSumToOneAtLargeMagnitude) {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t k = 2 + rng.below(9);
    Tensor z = Tensor::matrix(4, k);
    for (auto& v : z.data()) v = rng.uniform(-1e4, 1e4);
    const auto y = ad::log_softmax(ad::Var::constant(z));
    for (std::size_t r = 0; r < 4; ++r) {
      double s = 0.0;
      for (double v : y.value().row(r)) s += std::exp(v);
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(Backward, SquareGivesTwoX) {
  auto x = ad::Var::parameter(Tensor::scalar(3.0));
  ad::backward(ad::mul(x, x));
  EXPECT_DOUBLE_EQ(x.grad().item(), 6.0);
}

TEST(Backward, NonScalarLossThrows) {
  auto x = ad::Var::parameter(Tensor::from_rows({{1, 2}}));
  EXPECT_THROW(ad::backward(ad::relu(x)), ContractError);
}

TEST(Backward, LeafGradientsAccumulateUntilZeroed) {
  auto x = ad::Var::parameter(Tensor::scalar(3.0));
  auto loss = ad::mul(x, x);
  ad::backward(loss);
  ad::backward(loss);
  EXPECT_DOUBLE_EQ(x.grad().item(), 12.0);
  std::vector<ad::Var> leaves{x};
  ad::zero_grad(leaves);
  ad::backward(loss);
  EXPECT_DOUBLE_EQ(x.grad().item(), 6.0);
}

TEST(Backward, SoftmaxCrossEntropyGradient) {
  Rng rng(3);
  Tensor z = random_matrix(rng, 1, 4);
  auto zv = ad::Var::parameter(z);
  const int y[] = {2};
  ad::backward(ad::scale(ad::sum(ad::pick(ad::log_softmax(zv), y)), -1.0));
  double norm = 0.0;
  for (double v : z.data()) norm += std::exp(v);
  for (int k = 0; k < 4; ++k) {
    const double expected = std::exp(z[k]) / norm - (k == 2 ? 1.0 : 0.0);
    EXPECT_NEAR(zv.grad()[k], expected, 1e-14);
  }
}

TEST(Backward, VisitsEachNodeOnce) {
  // diamond: b and c both read a, d reads both
  auto a = ad::Var::parameter(Tensor::from_rows({{1.0, -2.0}}));
  auto b = ad::tanh(a);
  auto c = ad::sigmoid(a);
  auto d = ad::sum(ad::add(ad::mul(b, c), b));
  ad::backward(d);
  // a, b, c, mul, add, sum
  EXPECT_EQ(ad::last_backward_visit_count(), 6u);
  const double ta = std::tanh(1.0), sa = 1.0 / (1.0 + std::exp(-1.0));
  const double expected = (1 - ta * ta) * sa + ta * sa * (1 - sa) + (1 - ta * ta);
  EXPECT_NEAR(a.grad()[0], expected, 1e-14);
}

TEST(Backward, DetachStopsGradient) {
  auto x = ad::Var::parameter(Tensor::scalar(2.0));
  auto y = ad::mul(x, x.detach());
  ad::backward(y);
  EXPECT_DOUBLE_EQ(x.grad().item(), 2.0);
}

TEST(Backward, GradientShapesMatchValues) {
  auto w = ad::Var::parameter(Tensor::matrix(3, 2, 0.5));
  auto b = ad::Var::parameter(Tensor({3}, 0.1));
  auto x = ad::Var::constant(Tensor::matrix(4, 2, 1.0));
  ad::backward(ad::mean(ad::linear(x, w, b)));
  EXPECT_TRUE(w.grad().same_shape(w.value()));
  EXPECT_TRUE(b.grad().same_shape(b.value()));
}

TEST(Pick, RejectsOutOfRangeIndex) {
  auto a = ad::Var::constant(Tensor::matrix(2, 3));
  const int idx[] = {0, 3};
  EXPECT_THROW(ad::pick(a, idx), DimensionError);
}

TEST(ConcatRows, Stacks) {
  auto a = ad::Var::constant(Tensor::from_rows({{1, 2}}));
  auto b = ad::Var::constant(Tensor::from_rows({{3, 4}, {5, 6}}));
  EXPECT_EQ(ad::concat_rows(a, b).value(), Tensor::from_rows({{1, 2}, {3, 4}, {5, 6}}));
  EXPECT_THROW(ad::concat_rows(a, ad::Var::constant(Tensor::matrix(1, 3))), DimensionError);
}

// Every op against central differences: loss = sum(op(...) * r) with a
// random weighting r, over 100 seeds.
class OpGradients : public ::testing::TestWithParam<int> {};

TEST_P(OpGradients, MatchFiniteDifferences) {
  const auto seed = static_cast<std::uint64_t>(GetParam());
  Rng rng(seed);
  const std::size_t n = 2 + rng.below(3), m = 2 + rng.below(3), k = 2 + rng.below(3);
  const Tensor a = random_matrix(rng, n, m);
  const Tensor b = random_matrix(rng, n, m);
  const Tensor w = random_matrix(rng, k, m);
  const Tensor bias({k}, std::vector<double>(k, 0.1));
  const Tensor mm = random_matrix(rng, m, k);
  std::vector<int> labels(n);
  for (auto& l : labels) l = static_cast<int>(rng.below(m));

  auto weighted = [&](const ad::Var& v, std::uint64_t tag) {
    Rng r(seed * 977 + tag);
    Tensor wt = Tensor(v.value().shape());
    for (auto& x : wt.data()) x = r.normal();
    return ad::sum(ad::mul(v, ad::Var::constant(wt)));
  };

  std::vector<std::pair<const char*, farconf::testing::LossBuilder>> cases = {
      {"matmul", [&](const auto& v) { return weighted(ad::matmul(v[0], v[2]), 1); }},
      {"linear", [&](const auto& v) { return weighted(ad::linear(v[0], v[3], v[4]), 2); }},
      {"add", [&](const auto& v) { return weighted(ad::add(v[0], v[1]), 3); }},
      {"sub", [&](const auto& v) { return weighted(ad::sub(v[0], v[1]), 4); }},
      {"mul", [&](const auto& v) { return weighted(ad::mul(v[0], v[1]), 5); }},
      {"scale", [&](const auto& v) { return weighted(ad::scale(v[0], -1.7), 6); }},
      {"add_scalar", [&](const auto& v) { return weighted(ad::add_scalar(v[0], 0.3), 7); }},
      {"relu", [&](const auto& v) { return weighted(ad::relu(v[0]), 8); }},
      {"sigmoid", [&](const auto& v) { return weighted(ad::sigmoid(v[0]), 9); }},
      {"tanh", [&](const auto& v) { return weighted(ad::tanh(v[0]), 10); }},
      {"log_softmax", [&](const auto& v) { return weighted(ad::log_softmax(v[0]), 11); }},
      {"log_sigmoid", [&](const auto& v) { return weighted(ad::log_sigmoid(v[0]), 12); }},
      {"pick", [&](const auto& v) { return weighted(ad::pick(v[0], labels), 13); }},
      {"mean", [&](const auto& v) { return ad::mean(ad::mul(v[0], v[1])); }},
      {"concat_rows", [&](const auto& v) { return weighted(ad::concat_rows(v[0], v[1]), 14); }},
  };
  for (const auto& [name, build] : cases) {
    auto r = check_gradients({a, b, mm, w, bias}, build);
    if (r.near_kink) continue;
    EXPECT_LT(r.max_rel_err, 1e-5) << name << " seed " << seed;
  }
}

INSTANTIATE_TEST_SUITE_P(Seeds, OpGradients, ::testing::Range(0, 100));
