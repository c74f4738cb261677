#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "farconf/error.hpp"
#include "farconf/losses.hpp"
#include "farconf/optim.hpp"
#include "farconf/softmax.hpp"
#include "farconf/synth.hpp"
#include "support/gradcheck.hpp"

using namespace farconf;
using farconf::testing::check_gradients;
using farconf::testing::param_vars;
using farconf::testing::random_matrix;
using farconf::testing::random_net;

namespace {

ad::Var logits_var(std::initializer_list<std::initializer_list<double>> rows) {
  return ad::Var::constant(Tensor::from_rows(rows));
}

}  // namespace

TEST(CrossEntropy, HugeCorrectMarginIsZero) {
  const int y[] = {0, 1};
  const auto l = cross_entropy(logits_var({{800, 0}, {-5, 900}}), y);
  EXPECT_NEAR(l.value().item(), 0.0, 1e-300);
}

TEST(CrossEntropy, ZeroNetworkIsLnK) {
  MlpSpec spec{2, {4}, 2, Activation::relu};
  NetworkParams p = init_params(spec, 0);
  for (auto& layer : p.layers) std::fill(layer.weight.data().begin(), layer.weight.data().end(), 0.0);
  const Tensor x = Tensor::from_rows({{1, 2}, {-3, 4}, {9, 9}});
  const int y[] = {0, 1, 1};
  EXPECT_NEAR(cross_entropy_in(ParamVars::bind(p), x, y).value().item(), std::log(2.0), 1e-15);
}

TEST(CrossEntropy, MatchesNaiveAverage) {
  MlpSpec spec{2, {6, 5}, 3, Activation::tanh};
  const NetworkParams p = random_net(spec, 12);
  Rng rng(2);
  const Tensor x = random_matrix(rng, 16, 2, 3.0);
  std::vector<int> y(16);
  for (auto& v : y) v = static_cast<int>(rng.below(3));
  const Tensor logits = forward_logits(p, x);
  double naive = 0.0;
  for (std::size_t i = 0; i < 16; ++i) {
    double z = 0.0;
    for (double v : logits.row(i)) z += std::exp(v);
    naive += -std::log(std::exp(logits(i, static_cast<std::size_t>(y[i]))) / z);
  }
  EXPECT_NEAR(cross_entropy_in(ParamVars::bind(p), x, y).value().item(), naive / 16.0, 1e-13);
}

TEST(CrossEntropy, OodLabelIsContractError) {
  const int y[] = {0, kOodLabel};
  EXPECT_THROW(cross_entropy(logits_var({{1, 2}, {3, 4}}), y), ContractError);
  const int z[] = {0, 2};
  EXPECT_THROW(cross_entropy(logits_var({{1, 2}, {3, 4}}), z), ContractError);
}

TEST(KlUniform, ZeroLogitsGiveZero) {
  EXPECT_NEAR(kl_uniform_from_logits(logits_var({{0, 0}, {3, 3}}), 2).value().item(), 0.0, 1e-15);
}

TEST(KlUniform, ThreeQuarterQuarter) {
  const double z = std::log(3.0);  // softmax(ln 3, 0) = (0.75, 0.25)
  const double expected = 0.5 * std::log(0.5 / 0.75) + 0.5 * std::log(0.5 / 0.25);
  EXPECT_NEAR(expected, 0.143841, 1e-6);
  EXPECT_NEAR(kl_uniform_from_logits(logits_var({{z, 0}}), 2).value().item(), expected, 1e-15);
}

TEST(KlUniform, ExtremeLogitsStayFinite) {
  const double v = kl_uniform_from_logits(logits_var({{1000, 0}}), 2).value().item();
  EXPECT_TRUE(std::isfinite(v));
  EXPECT_NEAR(v, 500.0 - std::log(2.0), 1e-9);
}

TEST(KlUniform, EqualsLnKMinusCrossEntropyForm) {
  Rng rng(21);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t k = 2 + rng.below(6);
    Tensor z = random_matrix(rng, 5, k, 4.0);
    double direct = 0.0;
    for (std::size_t i = 0; i < 5; ++i) {
      const auto p = softmax(z.row(i));
      for (double q : p) direct += (1.0 / k) * std::log((1.0 / k) / q);
    }
    direct /= 5.0;
    EXPECT_NEAR(kl_uniform_from_logits(ad::Var::constant(z), k).value().item(), direct, 1e-10);
  }
}

TEST(KlUniform, Preconditions) {
  EXPECT_THROW(kl_uniform_from_logits(logits_var({{1}}), 1), ContractError);
  EXPECT_THROW(kl_uniform_from_logits(logits_var({{1, 2, 3}}), 2), DimensionError);
}

TEST(Gan, DiscriminatorLossAtHalf) {
  // D = 0.5 on everything -> loss = 2 ln 2
  const auto l = discriminator_loss(logits_var({{0}, {0}}), logits_var({{0}}));
  EXPECT_NEAR(l.value().item(), 2 * std::log(2.0), 1e-15);
  const auto g = generator_adversarial_term(logits_var({{0}, {0}}));
  EXPECT_NEAR(g.value().item(), std::log(0.5), 1e-15);
}

TEST(Gan, LossesStableAtExtremeLogits) {
  const auto l = discriminator_loss(logits_var({{-800}}), logits_var({{800}}));
  EXPECT_NEAR(l.value().item(), 1600.0, 1e-9);
  const auto g = generator_adversarial_term(logits_var({{800}}));
  EXPECT_NEAR(g.value().item(), -800.0, 1e-9);
}

class LossGradients : public ::testing::TestWithParam<int> {};

TEST_P(LossGradients, MatchFiniteDifferences) {
  const auto seed = static_cast<std::uint64_t>(GetParam());
  Rng rng(seed + 1000);
  const Activation acts[] = {Activation::relu, Activation::sigmoid, Activation::tanh};
  const MlpSpec spec{2, {5, 4}, 3, acts[seed % 3]};
  const MlpSpec rspec{2, {5, 4}, 4, acts[seed % 3]};
  const NetworkParams p = random_net(spec, seed);
  const NetworkParams pr = random_net(rspec, seed + 7);
  const Tensor x = random_matrix(rng, 6, 2, 2.0);
  const Tensor xo = random_matrix(rng, 4, 2, 4.0);
  std::vector<int> y(6), yr(10);
  for (auto& v : y) v = static_cast<int>(rng.below(3));
  for (std::size_t i = 0; i < 10; ++i) yr[i] = i < 6 ? y[i] : 3;

  struct Case {
    const char* name;
    const NetworkParams* net;
    farconf::testing::LossBuilder build;
  };
  const std::vector<Case> cases = {
      {"ce", &p, [&](const auto& v) { return cross_entropy_in(param_vars(spec, v), x, y); }},
      {"kl", &p, [&](const auto& v) { return kl_uniform(param_vars(spec, v), xo, 3); }},
      {"confident", &p,
       [&](const auto& v) {
         const auto pv = param_vars(spec, v);
         return cross_entropy_in(pv, x, y) + 0.7 * kl_uniform(pv, xo, 3);
       }},
      {"reject", &pr,
       [&](const auto& v) {
         const auto xa = ad::concat_rows(ad::Var::constant(x), ad::Var::constant(xo));
         return cross_entropy(forward_graph(param_vars(rspec, v), xa), yr);
       }},
  };
  for (const auto& c : cases) {
    const auto r = check_gradients(flatten(*c.net), c.build);
    if (r.near_kink) continue;
    EXPECT_LT(r.max_rel_err, 1e-5) << c.name << " seed " << seed;
  }
}

INSTANTIATE_TEST_SUITE_P(Seeds, LossGradients, ::testing::Range(0, 100));

TEST(Sgd, SingleStepOnSquare) {
  OptimizerConfig cfg{OptimizerKind::sgd, 0.1, 0.0};
  SgdState st;
  const Tensor w = Tensor::scalar(1.0);
  const Tensor g = Tensor::scalar(2.0);  // d/dw w^2
  const auto out = sgd_step(std::span(&w, 1), std::span(&g, 1), cfg, st);
  EXPECT_DOUBLE_EQ(out[0].item(), 0.8);
}

TEST(Sgd, Momentum) {
  OptimizerConfig cfg{OptimizerKind::sgd, 0.1, 0.9};
  SgdState st;
  Tensor w = Tensor::scalar(1.0);
  const Tensor g = Tensor::scalar(1.0);
  w = sgd_step(std::span(&w, 1), std::span(&g, 1), cfg, st)[0];
  w = sgd_step(std::span(&w, 1), std::span(&g, 1), cfg, st)[0];
  EXPECT_NEAR(w.item(), 1.0 - 0.1 - 0.19, 1e-15);
}

TEST(Adam, FirstStepMagnitudeIsLr) {
  OptimizerConfig cfg;
  cfg.learning_rate = 0.01;
  AdamState st;
  const Tensor w = Tensor::from_rows({{0.5, -2.0}});
  const Tensor g = Tensor::from_rows({{1.0, -3.0}});
  const auto out = adam_step(std::span(&w, 1), std::span(&g, 1), cfg, st);
  EXPECT_NEAR(out[0][0], 0.5 - 0.01, 1e-9);
  EXPECT_NEAR(out[0][1], -2.0 + 0.01, 1e-9);
}

TEST(Adam, ConvergesOnConvexQuadratic) {
  // f(w) = 0.5 (w0^2 + 2 w1^2)
  OptimizerConfig cfg{OptimizerKind::adam, 0.1, 0.0, 0.5, 0.999, 1e-8};
  Optimizer opt(cfg);
  std::vector<Tensor> w{Tensor::from_rows({{1.0, 1.0}})};
  double gnorm = 0.0;
  for (int i = 0; i < 200; ++i) {
    std::vector<Tensor> g{Tensor::from_rows({{w[0][0], 2.0 * w[0][1]}})};
    w = opt.step(w, g);
    gnorm = std::hypot(w[0][0], 2.0 * w[0][1]);
  }
  EXPECT_LT(gnorm, 1e-6);
}

TEST(Optimizer, KindStrings) {
  EXPECT_EQ(optimizer_from_string("sgd"), OptimizerKind::sgd);
  EXPECT_EQ(to_string(OptimizerKind::adam), "adam");
  EXPECT_THROW(optimizer_from_string("rmsprop"), ConfigError);
}
