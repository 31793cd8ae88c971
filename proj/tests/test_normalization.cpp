#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "actlab/autodiff.hpp"
#include "actlab/errors.hpp"
#include "actlab/normalization.hpp"
#include "gradcheck.hpp"

using namespace actlab;

namespace {

void expect_all_near(const Tensor<double>& got, std::vector<double> expect, double tol) {
  ASSERT_EQ(got.size(), expect.size());
  for (std::size_t i = 0; i < expect.size(); ++i) EXPECT_NEAR(got[i], expect[i], tol) << i;
}

}  // namespace

TEST(BatchNorm, HandComputedExample) {
  auto bn = NormLayer<double>::batch(1);
  const Tensor<double> x({3, 1}, {1, 2, 3});
  expect_all_near(batch_norm_forward(x, bn, Mode::kTrain), {-1.2247, 0, 1.2247}, 1e-3);
}

TEST(BatchNorm, AffineExample) {
  auto bn = NormLayer<double>::batch(1);
  bn.gamma.fill(2.0);
  bn.beta.fill(1.0);
  const Tensor<double> x({3, 1}, {1, 2, 3});
  expect_all_near(batch_norm_forward(x, bn, Mode::kTrain), {-1.4494, 1, 3.4494}, 2e-3);
}

TEST(BatchNorm, ConstantBatchGivesBeta) {
  auto bn = NormLayer<double>::batch(2);
  bn.beta[0] = 0.3;
  bn.beta[1] = -0.7;
  const auto y = batch_norm_forward(Tensor<double>({4, 2, 3, 3}, 5.0), bn, Mode::kTrain);
  for (std::size_t n = 0; n < 4; ++n) {
    for (std::size_t i = 0; i < 3; ++i) {
      EXPECT_EQ(y(n, 0, i, 1), 0.3);
      EXPECT_EQ(y(n, 1, i, 1), -0.7);
    }
  }
}

TEST(BatchNorm, TrainModeStandardizesEachChannel) {
  std::mt19937_64 rng(1);
  auto bn = NormLayer<double>::batch(3);
  const auto x = random_normal<double>({5, 3, 4, 4}, rng, 3.0, 2.0);
  const auto y = batch_norm_forward(x, bn, Mode::kTrain);
  for (std::size_t c = 0; c < 3; ++c) {
    double s = 0, s2 = 0;
    for (std::size_t n = 0; n < 5; ++n) {
      for (std::size_t i = 0; i < 16; ++i) {
        const double v = y(n, c, i / 4, i % 4);
        s += v;
        s2 += v * v;
      }
    }
    const double mean = s / 80, var = s2 / 80 - mean * mean;
    EXPECT_LT(std::abs(mean), 1e-5);
    EXPECT_NEAR(var, 1.0, 1e-4);
  }
}

TEST(BatchNorm, RunningStatisticsUseMomentum) {
  auto bn = NormLayer<double>::batch(1);
  ASSERT_EQ(bn.running_var[0], 1.0);
  ASSERT_EQ(bn.running_mean[0], 0.0);
  batch_norm_forward(Tensor<double>({3, 1}, {1, 2, 3}), bn, Mode::kTrain);
  EXPECT_NEAR(bn.running_mean[0], 0.1 * 2.0, 1e-15);
  EXPECT_NEAR(bn.running_var[0], 0.9 + 0.1 * (2.0 / 3.0), 1e-15);
}

TEST(BatchNorm, EvalModeIsFixedAffineMap) {
  auto bn = NormLayer<double>::batch(1);
  bn.running_mean[0] = 1.0;
  bn.running_var[0] = 4.0;
  const Tensor<double> a({2, 1}, {3.0, 100.0});
  const Tensor<double> b({2, 1}, {3.0, -50.0});
  const auto ya = batch_norm_forward(a, bn, Mode::kEval);
  const auto yb = batch_norm_forward(b, bn, Mode::kEval);
  EXPECT_EQ(ya[0], yb[0]);
  EXPECT_NEAR(ya[0], 2.0 / std::sqrt(4.0 + 1e-5), 1e-15);
  EXPECT_EQ(bn.running_mean[0], 1.0);
}

TEST(BatchNorm, SingleValuePerChannelWarns) {
  auto bn = NormLayer<double>::batch(2);
  bn.beta.fill(0.25);
  const auto y = batch_norm_forward(Tensor<double>({1, 2, 1, 1}, {3.0, -1.0}), bn, Mode::kTrain);
  EXPECT_EQ(y.storage(), (std::vector<double>{0.25, 0.25}));
  EXPECT_FALSE(bn.warnings.empty());
}

TEST(BatchNorm, EmptyBatchIsContractError) {
  auto bn = NormLayer<double>::batch(2);
  EXPECT_THROW(batch_norm_forward(Tensor<double>({0, 2}), bn, Mode::kTrain), ContractError);
}

TEST(LayerNorm, HandComputedExample) {
  const auto ln = NormLayer<double>::layer({3});
  expect_all_near(layer_norm_forward(Tensor<double>({1, 3}, {1, 2, 3}), ln), {-1.2247, 0, 1.2247}, 1e-3);
}

TEST(LayerNorm, ConstantVectorGivesBeta) {
  auto ln = NormLayer<double>::layer({4});
  for (std::size_t i = 0; i < 4; ++i) ln.beta[i] = 0.1 * static_cast<double>(i);
  const auto y = layer_norm_forward(Tensor<double>({1, 4}, 7.0), ln);
  expect_all_near(y, {0.0, 0.1, 0.2, 0.3}, 1e-15);
}

TEST(LayerNorm, SamplesAreIndependent) {
  std::mt19937_64 rng(2);
  const auto ln = NormLayer<double>::layer({6});
  auto x = random_normal<double>({3, 6}, rng);
  const auto before = layer_norm_forward(x, ln);
  for (std::size_t j = 0; j < 6; ++j) x(2, j) = 100.0 * static_cast<double>(j * j);
  const auto after = layer_norm_forward(x, ln);
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t j = 0; j < 6; ++j) EXPECT_EQ(before(i, j), after(i, j));
  }
}

TEST(GroupNorm, SingleGroupEqualsLayerNorm) {
  std::mt19937_64 rng(3);
  const auto x = random_normal<double>({2, 4, 3, 3}, rng);
  const auto gn = group_norm_forward(x, NormLayer<double>::group(4, 1));
  const auto ln = layer_norm_forward(x, NormLayer<double>::layer({4, 3, 3}));
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(gn[i], ln[i], 1e-6);
}

TEST(GroupNorm, GroupPerChannelMatchesDirectInstanceStatistics) {
  std::mt19937_64 rng(4);
  const auto x = random_normal<double>({2, 3, 4, 5}, rng, 2.0, 1.0);
  const auto y = group_norm_forward(x, NormLayer<double>::group(3, 3));
  for (std::size_t n = 0; n < 2; ++n) {
    for (std::size_t c = 0; c < 3; ++c) {
      double mean = 0;
      for (std::size_t i = 0; i < 20; ++i) mean += x(n, c, i / 5, i % 5);
      mean /= 20;
      double var = 0;
      for (std::size_t i = 0; i < 20; ++i) var += std::pow(x(n, c, i / 5, i % 5) - mean, 2);
      var /= 20;
      for (std::size_t i = 0; i < 20; ++i) {
        EXPECT_NEAR(y(n, c, i / 5, i % 5), (x(n, c, i / 5, i % 5) - mean) / std::sqrt(var + 1e-5), 1e-6);
      }
    }
  }
}

TEST(GroupNorm, ConstantInputGivesBetaPerGroup) {
  auto gn = NormLayer<double>::group(4, 2);
  gn.beta = Tensor<double>({4}, {1, 1, -2, -2});
  const auto y = group_norm_forward(Tensor<double>({1, 4, 2, 2}, 3.0), gn);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(y(0, 0, i / 2, i % 2), 1.0);
    EXPECT_EQ(y(0, 3, i / 2, i % 2), -2.0);
  }
}

TEST(GroupNorm, IndivisibleChannelsIsConfigError) {
  EXPECT_THROW(NormLayer<double>::group(6, 4), ConfigError);
  auto bad = NormLayer<double>::batch(2);
  bad.epsilon = 0.0;
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(NormProperty, ShiftInvariancePerRegion) {
  std::mt19937_64 rng(5);
  const auto x = random_normal<double>({4, 4, 3, 3}, rng);
  auto shifted_by = [&](auto region) {
    auto y = x;
    for (std::size_t n = 0; n < 4; ++n) {
      for (std::size_t c = 0; c < 4; ++c) {
        for (std::size_t i = 0; i < 9; ++i) {
          if (region(n, c)) y(n, c, i / 3, i % 3) += 3.5;
        }
      }
    }
    return y;
  };
  auto bn = NormLayer<double>::batch(4);
  auto bn2 = bn;
  const auto xb = shifted_by([](std::size_t, std::size_t c) { return c == 2; });
  const auto a = normalize(x, bn, Mode::kTrain).normalized, b = normalize(xb, bn2, Mode::kTrain).normalized;
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-6);

  const auto xl = shifted_by([](std::size_t n, std::size_t) { return n == 1; });
  const auto ln = NormLayer<double>::layer({4, 3, 3});
  const auto la = layer_norm_forward(x, ln), lb = layer_norm_forward(xl, ln);
  for (std::size_t i = 0; i < la.size(); ++i) EXPECT_NEAR(la[i], lb[i], 1e-6);

  const auto xg = shifted_by([](std::size_t n, std::size_t c) { return n == 3 && c >= 2; });
  const auto gn = NormLayer<double>::group(4, 2);
  const auto ga = group_norm_forward(x, gn), gb = group_norm_forward(xg, gn);
  for (std::size_t i = 0; i < ga.size(); ++i) EXPECT_NEAR(ga[i], gb[i], 1e-6);
}

TEST(NormProperty, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(6);
  const auto x = random_normal<double>({3, 4, 2, 3}, rng);
  const auto gamma = random_normal<double>({4}, rng, 0.5, 1.0);
  const auto beta = random_normal<double>({4}, rng);
  for (NormKind kind : {NormKind::kBatch, NormKind::kLayer, NormKind::kGroup}) {
    const double err = oracle::gradient_check(
        [kind](Graph<double>& g, const std::vector<Var>& v) {
          NormLayer<double> layer = kind == NormKind::kBatch   ? NormLayer<double>::batch(4)
                                    : kind == NormKind::kGroup ? NormLayer<double>::group(4, 2)
                                                               : NormLayer<double>::group(4, 1);
          return g.norm(v[0], v[1], v[2], layer, Mode::kTrain);
        },
        {x, gamma, beta}, 7);
    EXPECT_LE(err, 1e-5) << norm_name(kind);
  }
}

TEST(NormNames, RoundTrip) {
  for (NormKind k : {NormKind::kBatch, NormKind::kLayer, NormKind::kGroup}) EXPECT_EQ(parse_norm(norm_name(k)), k);
  EXPECT_THROW(parse_norm("instance"), ConfigError);
}
