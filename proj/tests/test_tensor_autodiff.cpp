#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "actlab/autodiff.hpp"
#include "actlab/errors.hpp"
#include "actlab/kernels.hpp"
#include "gradcheck.hpp"
#include "test_support.hpp"

using namespace actlab;
using actlab::oracle::gradient_check;

namespace {

Tensor<double> mat(std::size_t r, std::size_t c, std::vector<double> v) { return Tensor<double>({r, c}, std::move(v)); }

}  // namespace

TEST(Tensor, ShapeMustMatchData) {
  EXPECT_THROW(Tensor<double>({2, 3}, std::vector<double>(5)), DimensionError);
  Tensor<double> t({2, 3}, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(t(1, 2), 6.0);
  EXPECT_EQ(t.reshaped({3, 2})(2, 1), 6.0);
  EXPECT_THROW(t.reshaped({4, 2}), DimensionError);
  EXPECT_THROW(t.item(), ContractError);
}

TEST(Matmul, IdentityLeavesOperandUnchanged) {
  const auto eye = mat(2, 2, {1, 0, 0, 1});
  const auto a = mat(2, 2, {1, 2, 3, 4});
  EXPECT_EQ(matmul(eye, a), a);
}

TEST(Matmul, RowTimesColumn) {
  const auto c = matmul(mat(1, 2, {1, 2}), mat(2, 1, {3, 4}));
  ASSERT_EQ(c.shape(), (Shape{1, 1}));
  EXPECT_EQ(c[0], 11.0);
}

TEST(Matmul, MatchesTripleLoop) {
  std::mt19937_64 rng(1);
  const auto a = random_normal<double>({4, 5}, rng);
  const auto b = random_normal<double>({5, 3}, rng);
  const auto expect = oracle::naive_matmul(a, b);
  const auto got = matmul(a, b);
  EXPECT_LE(oracle::max_abs_diff(got.data(), expect.data()), 1e-12);
}

TEST(Matmul, TransposeFlags) {
  std::mt19937_64 rng(2);
  const auto a = random_normal<double>({5, 4}, rng);
  const auto b = random_normal<double>({3, 5}, rng);
  const auto expect = oracle::naive_matmul(oracle::transposed(a), oracle::transposed(b));
  const auto got = matmul(a, b, Transpose::kYes, Transpose::kYes);
  EXPECT_LE(oracle::max_abs_diff(got.data(), expect.data()), 1e-12);
}

TEST(Matmul, MismatchNamesBothShapes) {
  try {
    matmul(Tensor<double>({2, 3}), Tensor<double>({4, 5}));
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2,3]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[4,5]"), std::string::npos) << msg;
  }
}

TEST(Conv2d, UnitKernelIsIdentity) {
  std::mt19937_64 rng(3);
  const auto x = random_normal<double>({1, 1, 4, 5}, rng);
  const auto y = conv2d(x, Tensor<double>({1, 1, 1, 1}, 1.0), Tensor<double>(), {});
  EXPECT_EQ(y, x);
}

TEST(Conv2d, OnesKernelSumsPatch) {
  const auto y = conv2d(Tensor<double>({1, 1, 3, 3}, 1.0), Tensor<double>({1, 1, 3, 3}, 1.0),
                        Tensor<double>({1}, 0.5), {});
  ASSERT_EQ(y.shape(), (Shape{1, 1, 1, 1}));
  EXPECT_EQ(y[0], 9.5);
}

TEST(Conv2d, StridedPaddedMatchesNestedLoops) {
  std::mt19937_64 rng(4);
  const auto x = random_normal<double>({1, 2, 5, 5}, rng);
  const auto k = random_normal<double>({3, 2, 3, 3}, rng);
  const auto b = random_normal<double>({3}, rng);
  const auto got = conv2d(x, k, b, {2, 1});
  const auto expect = oracle::naive_conv2d(x, k, b.storage(), 2, 1);
  ASSERT_EQ(got.shape(), (Shape{1, 3, 3, 3}));
  EXPECT_LE(oracle::max_abs_diff(got.data(), expect.data()), 1e-12);
}

TEST(Conv2d, RandomShapesMatchNestedLoops) {
  std::mt19937_64 rng(5);
  auto pick = [&](std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(rng); };
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = pick(1, 2), c = pick(1, 4), h = pick(3, 8), w = pick(3, 8), f = pick(1, 4);
    const std::size_t kh = pick(1, 3), kw = pick(1, 3), stride = pick(1, 2), pad = pick(0, 1);
    const auto x = random_normal<double>({n, c, h, w}, rng);
    const auto k = random_normal<double>({f, c, kh, kw}, rng);
    const auto b = random_normal<double>({f}, rng);
    const auto got = conv2d(x, k, b, {stride, pad});
    const auto expect = oracle::naive_conv2d(x, k, b.storage(), stride, pad);
    ASSERT_EQ(got.shape(), expect.shape());
    EXPECT_LE(oracle::max_abs_diff(got.data(), expect.data()), 1e-12) << "trial " << trial;
  }
}

TEST(Conv2d, ChannelMismatchIsDimensionError) {
  EXPECT_THROW(conv2d(Tensor<double>({1, 2, 4, 4}), Tensor<double>({1, 3, 3, 3}), Tensor<double>(), {}),
               DimensionError);
}

TEST(Conv2d, BackwardMatchesFiniteDifferences) {
  std::mt19937_64 rng(6);
  const auto x = random_normal<double>({2, 2, 5, 4}, rng);
  const auto k = random_normal<double>({3, 2, 3, 3}, rng);
  const auto b = random_normal<double>({3}, rng);
  const double err = gradient_check(
      [](Graph<double>& g, const std::vector<Var>& v) { return g.conv2d(v[0], v[1], v[2], {2, 1}); }, {x, k, b}, 7);
  EXPECT_LE(err, 1e-6);
}

TEST(Backward, SquareHasGradientTwoX) {
  Graph<double> g;
  const Var x = g.leaf(Tensor<double>::scalar(3.0));
  const auto grads = g.backward(g.mul(x, x));
  EXPECT_NEAR(grads[x].item(), 6.0, 1e-12);
}

TEST(Backward, LinearMap) {
  Graph<double> g;
  const Var w = g.leaf(mat(2, 2, {1, 0, 0, 1}));
  const Var z = g.leaf(Tensor<double>({2, 1}, {1, 2}));
  const auto grads = g.backward(g.sum(g.matmul(w, z)));
  EXPECT_EQ(grads[w].storage(), (std::vector<double>{1, 2, 1, 2}));
  EXPECT_EQ(grads[z].storage(), (std::vector<double>{1, 1}));
}

TEST(Backward, TwoLayerTanhNetMatchesFiniteDifferences) {
  std::mt19937_64 rng(8);
  const auto x = random_normal<double>({4, 2}, rng);
  const auto w1 = random_normal<double>({3, 2}, rng);
  const auto b1 = random_normal<double>({3}, rng);
  const auto w2 = random_normal<double>({2, 3}, rng);
  const auto b2 = random_normal<double>({2}, rng);
  const Activation tanh_act{ActivationKind::kTanh, {}};
  const double err = gradient_check(
      [&](Graph<double>& g, const std::vector<Var>& v) {
        const Var h = g.activation(g.linear(v[0], v[1], v[2]), tanh_act, {});
        return g.linear(h, v[3], v[4]);
      },
      {x, w1, b1, w2, b2}, 9);
  EXPECT_LE(err, 1e-6);
}

TEST(Backward, NonScalarLossIsContractError) {
  Graph<double> g;
  const Var x = g.leaf(Tensor<double>({2}, 1.0));
  EXPECT_THROW(g.backward(x), ContractError);
}

TEST(Backward, UnreachableLeafGetsZeroGradient) {
  Graph<double> g;
  const Var x = g.leaf(Tensor<double>({2}, 1.0));
  const Var unused = g.leaf(Tensor<double>({3}, 1.0));
  const auto grads = g.backward(g.sum(x));
  EXPECT_EQ(grads[unused], Tensor<double>({3}, 0.0));
}

TEST(Backward, ConstantsReceiveNoGradient) {
  Graph<double> g;
  const Var x = g.leaf(Tensor<double>({2}, 1.0));
  const Var c = g.constant(Tensor<double>({2}, 3.0));
  const auto grads = g.backward(g.sum(g.mul(x, c)));
  EXPECT_EQ(grads[x].storage(), (std::vector<double>{3, 3}));
  EXPECT_FALSE(grads.contains(c));
}

TEST(Backward, NonFiniteValueNamesTheScope) {
  Graph<double> g;
  const Var a = g.leaf(Tensor<double>::scalar(std::numeric_limits<double>::infinity()));
  const Var b = g.leaf(Tensor<double>::scalar(0.0));
  g.set_scope("block2.layer1");
  try {
    g.mul(a, b);
    FAIL() << "expected NonFiniteError";
  } catch (const NonFiniteError& e) {
    EXPECT_NE(std::string(e.what()).find("block2.layer1"), std::string::npos) << e.what();
  }
}

TEST(Backward, Deterministic) {
  auto run = [] {
    std::mt19937_64 rng(10);
    Graph<double> g;
    const Var x = g.leaf(random_normal<double>({2, 3, 6, 6}, rng));
    const Var k = g.leaf(random_normal<double>({4, 3, 3, 3}, rng));
    const Var y = g.activation(g.conv2d(x, k, std::nullopt, {1, 1}), {ActivationKind::kGeluTanh, {}}, {});
    const auto grads = g.backward(g.mean(y));
    return std::make_pair(grads[x], grads[k]);
  };
  EXPECT_EQ(run(), run());
}

TEST(FiniteDiff, SumGivesOnes) {
  std::mt19937_64 rng(11);
  const auto x = random_normal<double>({7}, rng);
  const auto g = finite_diff_grad<double>(
      [](const Tensor<double>& t) {
        double s = 0;
        for (double v : t.data()) s += v;
        return s;
      },
      x, 1e-5);
  for (double v : g.data()) EXPECT_NEAR(v, 1.0, 1e-9);
}

TEST(FiniteDiff, Square) {
  const auto g = finite_diff_grad<double>([](const Tensor<double>& t) { return t[0] * t[0]; },
                                          Tensor<double>::scalar(3.0), 1e-5);
  EXPECT_NEAR(g.item(), 6.0, 1e-8);
}

TEST(FiniteDiff, AgreesWithBothGeluDerivatives) {
  for (int i = -3; i <= 3; ++i) {
    const Tensor<double> x = Tensor<double>::scalar(i);
    const double fd_tanh =
        finite_diff_grad<double>([](const Tensor<double>& t) { return gelu_tanh(t[0]); }, x, 1e-5).item();
    const double fd_exact =
        finite_diff_grad<double>([](const Tensor<double>& t) { return gelu_exact(t[0]); }, x, 1e-5).item();
    EXPECT_NEAR(fd_tanh, gelu_derivative_tanh<double>(i), 1e-6) << i;
    EXPECT_NEAR(fd_exact, gelu_derivative_exact<double>(i), 1e-6) << i;
  }
}

// Every recorded op against central differences on 100 random small instances.
TEST(GradientProperty, EveryOpMatchesFiniteDifferences) {
  std::mt19937_64 rng(12);
  auto pick = [&](std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(rng); };
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t m = pick(1, 3), n = pick(1, 4), k = pick(1, 3);
    const auto a = random_normal<double>({m, n}, rng);
    const auto b = random_normal<double>({m, n}, rng);
    const auto w = random_normal<double>({k, n}, rng);
    const auto bias = random_normal<double>({k}, rng);
    const auto img = random_normal<double>({1, 2, 4, 4}, rng);
    const std::vector<std::pair<const char*, std::pair<oracle::Builder, std::vector<Tensor<double>>>>> cases = {
        {"add", {[](Graph<double>& g, const std::vector<Var>& v) { return g.add(v[0], v[1]); }, {a, b}}},
        {"sub", {[](Graph<double>& g, const std::vector<Var>& v) { return g.sub(v[0], v[1]); }, {a, b}}},
        {"mul", {[](Graph<double>& g, const std::vector<Var>& v) { return g.mul(v[0], v[1]); }, {a, b}}},
        {"scale", {[](Graph<double>& g, const std::vector<Var>& v) { return g.scale(v[0], -1.7); }, {a}}},
        {"sum", {[](Graph<double>& g, const std::vector<Var>& v) { return g.sum(v[0]); }, {a}}},
        {"mean", {[](Graph<double>& g, const std::vector<Var>& v) { return g.mean(v[0]); }, {a}}},
        {"reshape", {[n, m](Graph<double>& g, const std::vector<Var>& v) { return g.reshape(v[0], {n * m}); }, {a}}},
        {"matmul",
         {[](Graph<double>& g, const std::vector<Var>& v) { return g.matmul(v[0], v[1]); }, {a, oracle::transposed(w)}}},
        {"linear", {[](Graph<double>& g, const std::vector<Var>& v) { return g.linear(v[0], v[1], v[2]); }, {a, w, bias}}},
        {"global_avg_pool", {[](Graph<double>& g, const std::vector<Var>& v) { return g.global_avg_pool(v[0]); }, {img}}},
    };
    for (const auto& [name, c] : cases) {
      EXPECT_LE(gradient_check(c.first, c.second, static_cast<std::uint64_t>(trial)), 1e-6)
          << name << " trial " << trial;
    }
  }
}
