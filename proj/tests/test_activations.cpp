#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "actlab/activations.hpp"
#include "actlab/errors.hpp"

using namespace actlab;

namespace {

// Reference values from an independent 50-digit evaluation.
constexpr double kGeluTanhAt1 = 0.84119199060827670;
constexpr double kGeluTanhAtMinus075 = -0.17003944483437970;
constexpr double kPhiAt1 = 0.84134474606854293;
constexpr double kGeluExactPrimeAtMinus1 = -0.083315470587686298;
constexpr double kFirstTermAt1 = 0.24197072451914335;
// Largest gaps between the two GELU forms (values and derivatives) on
// [-10, 10] at step 1e-3, measured once in high precision.
constexpr double kMaxValueGap = 4.733e-4;
constexpr double kMaxDerivativeGap = 8.685e-4;

double eval_at(const Activation& act, double x, const ActivationContext& ctx = {}) {
  return apply_activation(act, Tensor<double>({1}, {x}), ctx)[0];
}

double deriv_at(const Activation& act, double x, const ActivationContext& ctx = {}) {
  return activation_derivative(act, Tensor<double>({1}, {x}), ctx)[0];
}

Activation of(ActivationKind kind) { return Activation{kind, {}}; }

}  // namespace

TEST(ActivationNames, RoundTrip) {
  ASSERT_EQ(activation_names().size(), 21u);
  for (ActivationKind k : kAllActivations) EXPECT_EQ(parse_activation(activation_name(k)), k);
  EXPECT_EQ(parse_activation("gelu"), ActivationKind::kGeluTanh);
  EXPECT_EQ(parse_activation("leaky_relu"), ActivationKind::kLeakyRelu);
}

TEST(ActivationNames, UnknownNameListsChoices) {
  try {
    parse_activation("swish");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("gelu_exact"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("tanhshrink"), std::string::npos);
  }
}

TEST(GeluTanh, KnownValues) {
  EXPECT_EQ(gelu_tanh(0.0), 0.0);
  EXPECT_NEAR(gelu_tanh(1.0), 0.8412, 1e-4);
  EXPECT_NEAR(gelu_tanh(1.0), kGeluTanhAt1, 1e-14);
  EXPECT_NEAR(gelu_tanh(-0.75), -0.17, 1e-3);
  EXPECT_NEAR(gelu_tanh(-0.75), kGeluTanhAtMinus075, 1e-14);
}

TEST(GeluTanh, ConstantsAreExact) {
  const GeluConstants c;
  EXPECT_EQ(c.scale, std::sqrt(2.0 / M_PI));
  EXPECT_EQ(c.cubic, 0.044715);
  EXPECT_EQ(c.alpha, 1.0);
}

TEST(GeluExact, KnownValues) {
  EXPECT_EQ(gelu_exact(0.0), 0.0);
  EXPECT_NEAR(gelu_exact(1.0), 0.841345, 1e-6);
  EXPECT_NEAR(gelu_exact(1.0), kPhiAt1, 1e-15);
  EXPECT_NEAR(gelu_exact(10.0), 10.0, 1e-9);
}

TEST(GeluExact, NonPositiveAlphaIsParameterError) {
  EXPECT_THROW(gelu_exact(1.0, 0.0), ParameterError);
  EXPECT_THROW(gelu_exact(1.0, -1.0), ParameterError);
}

TEST(GeluExact, DerivativeValues) {
  EXPECT_EQ(gelu_derivative_exact(0.0), 0.5);
  EXPECT_NEAR(gelu_derivative_exact(-1.0), -0.0833, 1e-4);
  EXPECT_NEAR(gelu_derivative_exact(-1.0), kGeluExactPrimeAtMinus1, 1e-12);
  const double first_term = 1.0 * normal_pdf(1.0);
  EXPECT_NEAR(first_term, 0.241, 1e-3);
  EXPECT_NEAR(first_term, kFirstTermAt1, 1e-15);
}

TEST(GeluTanh, DerivativeMatchesCentralDifferences) {
  const double h = 1e-5;
  for (int i = -500; i <= 500; ++i) {
    const double x = i * 0.01;
    const double fd = (gelu_tanh(x + h) - gelu_tanh(x - h)) / (2 * h);
    EXPECT_NEAR(gelu_derivative_tanh(x), fd, 1e-7) << x;
  }
  EXPECT_EQ(gelu_derivative_tanh(0.0), 0.5);
}

TEST(GeluTanh, DerivativeNegativeLeftOfMinimum) {
  for (double x = -10.0; x <= -0.76; x += 1e-3) EXPECT_LT(gelu_derivative_tanh(x), 0.0) << x;
}

TEST(GeluForms, ValueGapWithinMeasuredBound) {
  double worst = 0.0;
  for (int i = -10000; i <= 10000; ++i) {
    const double x = i * 1e-3;
    worst = std::max(worst, std::abs(gelu_tanh(x) - gelu_exact(x)));
  }
  EXPECT_LE(worst, kMaxValueGap);
  EXPECT_LT(worst, 1e-2);
}

TEST(GeluForms, DerivativeGapWithinTwiceMeasuredBound) {
  for (int i = -10000; i <= 10000; ++i) {
    const double x = i * 1e-3;
    EXPECT_LE(std::abs(gelu_derivative_tanh(x) - gelu_derivative_exact(x)), 2 * kMaxDerivativeGap) << x;
  }
}

TEST(GeluTanh, BoundedBetweenMinimumAndPositivePart) {
  for (int i = -10000; i <= 10000; ++i) {
    const double x = i * 1e-3;
    EXPECT_LE(gelu_tanh(x), std::max(x, 0.0));
    EXPECT_GE(gelu_tanh(x), -0.1700408 - 1e-6);
  }
}

TEST(Activations, ReferenceValues) {
  EXPECT_EQ(eval_at(of(ActivationKind::kRelu), -2.0), 0.0);
  EXPECT_EQ(eval_at(of(ActivationKind::kTanh), 0.0), 0.0);
  EXPECT_EQ(eval_at(of(ActivationKind::kHardswish), 3.0), 3.0);
  EXPECT_EQ(eval_at(of(ActivationKind::kHardswish), -3.0), 0.0);
  EXPECT_EQ(eval_at(of(ActivationKind::kRelu6), 7.0), 6.0);
  EXPECT_EQ(eval_at(of(ActivationKind::kHardsigmoid), 0.0), 0.5);
  EXPECT_EQ(eval_at(of(ActivationKind::kHardtanh), -4.0), -1.0);
  EXPECT_EQ(eval_at(of(ActivationKind::kLeakyRelu), -2.0), -0.02);
  EXPECT_EQ(eval_at(of(ActivationKind::kPrelu), -2.0), -0.5);
  EXPECT_EQ(eval_at(of(ActivationKind::kHardshrink), 0.3), 0.0);
  EXPECT_EQ(eval_at(of(ActivationKind::kHardshrink), -0.7), -0.7);
  EXPECT_NEAR(eval_at(of(ActivationKind::kSoftshrink), -0.7), -0.2, 1e-15);
  EXPECT_NEAR(eval_at(of(ActivationKind::kSoftsign), 1.0), 0.5, 1e-15);
  EXPECT_NEAR(eval_at(of(ActivationKind::kSoftplus), 0.0), std::log(2.0), 1e-15);
  EXPECT_NEAR(eval_at(of(ActivationKind::kLogSigmoid), 0.0), -std::log(2.0), 1e-15);
  EXPECT_NEAR(eval_at(of(ActivationKind::kElu), -1.0), std::exp(-1.0) - 1.0, 1e-15);
  EXPECT_NEAR(eval_at(of(ActivationKind::kSelu), -1.0), 1.0507009873554805 * 1.6732632423543772 * (std::exp(-1.0) - 1.0),
              1e-14);
  EXPECT_NEAR(eval_at(of(ActivationKind::kSelu), 2.0), 2.0 * 1.0507009873554805, 1e-14);
  EXPECT_NEAR(eval_at(of(ActivationKind::kTanhshrink), 1.0), 1.0 - std::tanh(1.0), 1e-15);
  EXPECT_NEAR(eval_at(of(ActivationKind::kRrelu), -1.0), -(1.0 / 8 + 1.0 / 3) / 2, 1e-15);
}

TEST(Activations, ReferenceDerivatives) {
  EXPECT_EQ(deriv_at(of(ActivationKind::kRelu), 5.0), 1.0);
  EXPECT_EQ(deriv_at(of(ActivationKind::kRelu), -5.0), 0.0);
  EXPECT_EQ(deriv_at(of(ActivationKind::kSigmoid), 0.0), 0.25);
}

TEST(Activations, KinkConventions) {
  EXPECT_EQ(deriv_at(of(ActivationKind::kRelu), 0.0), 0.0);
  EXPECT_EQ(deriv_at(of(ActivationKind::kRelu6), 0.0), 0.0);
  EXPECT_EQ(deriv_at(of(ActivationKind::kRelu6), 6.0), 0.0);
  EXPECT_EQ(deriv_at(of(ActivationKind::kHardtanh), 1.0), 0.0);
  EXPECT_EQ(deriv_at(of(ActivationKind::kHardtanh), -1.0), 0.0);
  EXPECT_EQ(deriv_at(of(ActivationKind::kHardsigmoid), 3.0), 0.0);
  EXPECT_EQ(deriv_at(of(ActivationKind::kHardsigmoid), -3.0), 0.0);
  EXPECT_EQ(deriv_at(of(ActivationKind::kHardswish), -3.0), 0.0);
  EXPECT_EQ(deriv_at(of(ActivationKind::kHardswish), 3.0), 1.0);
  EXPECT_EQ(deriv_at(of(ActivationKind::kHardshrink), 0.5), 1.0);
  EXPECT_EQ(deriv_at(of(ActivationKind::kHardshrink), -0.5), 1.0);
  EXPECT_EQ(deriv_at(of(ActivationKind::kSoftshrink), 0.5), 1.0);
  EXPECT_EQ(deriv_at(of(ActivationKind::kSoftshrink), -0.5), 1.0);
}

TEST(Activations, EveryKindMatchesFiniteDifferences) {
  const double h = 1e-6;
  for (ActivationKind kind : kAllActivations) {
    const Activation act = of(kind);
    const auto kinks = activation_kinks(act);
    for (int i = -700; i <= 700; ++i) {
      const double x = i * 0.01 + 0.0037;
      bool near_kink = false;
      for (double k : kinks) near_kink = near_kink || std::abs(x - k) < 1e-3;
      if (near_kink) continue;
      const double fd = (eval_at(act, x + h) - eval_at(act, x - h)) / (2 * h);
      EXPECT_NEAR(deriv_at(act, x), fd, 1e-6) << activation_name(kind) << " at " << x;
    }
  }
}

TEST(Activations, MonotoneKindsAreMonotone) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-8.0, 8.0);
  for (ActivationKind kind : kAllActivations) {
    if (!is_monotone(kind)) continue;
    for (int i = 0; i < 2000; ++i) {
      double x = u(rng), y = u(rng);
      if (x > y) std::swap(x, y);
      EXPECT_LE(eval_at(of(kind), x), eval_at(of(kind), y)) << activation_name(kind);
    }
  }
  EXPECT_FALSE(is_monotone(ActivationKind::kGeluTanh));
  EXPECT_TRUE(is_monotone(ActivationKind::kSelu));
}

TEST(Activations, StableForLargeInputs) {
  for (ActivationKind kind : kAllActivations) {
    for (double x : {-1000.0, 1000.0}) {
      EXPECT_TRUE(std::isfinite(eval_at(of(kind), x))) << activation_name(kind);
      EXPECT_TRUE(std::isfinite(deriv_at(of(kind), x))) << activation_name(kind);
    }
  }
  EXPECT_EQ(eval_at(of(ActivationKind::kSoftplus), 1000.0), 1000.0);
  EXPECT_EQ(eval_at(of(ActivationKind::kLogSigmoid), -1000.0), -1000.0);
}

TEST(Rrelu, EvalModeIsDeterministicMidpoint) {
  const Activation act = of(ActivationKind::kRrelu);
  std::mt19937_64 rng(4);
  const auto x = random_normal<double>({64}, rng);
  EXPECT_EQ(apply_activation(act, x), apply_activation(act, x));
  EXPECT_NEAR(deriv_at(act, -1.0), (1.0 / 8 + 1.0 / 3) / 2, 1e-15);
}

TEST(Rrelu, TrainModeSlopesAreSharedByForwardAndBackward) {
  const Activation act = of(ActivationKind::kRrelu);
  std::mt19937_64 rng(5);
  const auto x = random_normal<double>({256}, rng);
  const ActivationContext ctx{Mode::kTrain, 99, 0.25};
  const auto y = apply_activation(act, x, ctx);
  const auto d = activation_derivative(act, x, ctx);
  bool varied = false;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] > 0) {
      EXPECT_EQ(d[i], 1.0);
      continue;
    }
    EXPECT_NEAR(y[i], d[i] * x[i], 1e-15);
    EXPECT_GE(d[i], 1.0 / 8);
    EXPECT_LE(d[i], 1.0 / 3);
    varied = varied || std::abs(d[i] - d[0]) > 1e-6;
  }
  EXPECT_TRUE(varied);
  EXPECT_EQ(apply_activation(act, x, ctx), y);
}

TEST(Activations, InvalidParametersRejected) {
  Activation bad = of(ActivationKind::kRrelu);
  bad.params.rrelu_lower = 0.5;
  bad.params.rrelu_upper = 0.4;
  EXPECT_THROW(bad.validate(), ParameterError);
  Activation shrink = of(ActivationKind::kSoftshrink);
  shrink.params.shrink_lambda = -1.0;
  EXPECT_THROW(shrink.validate(), ParameterError);
}

TEST(Activations, TrainingPrecisionAgreesWithAnalysisPrecision) {
  std::mt19937_64 rng(6);
  const auto x = random_normal<double>({100}, rng, 3.0);
  const auto xf = x.cast<float>();
  for (ActivationKind kind : kAllActivations) {
    const auto yd = apply_activation(of(kind), xf.cast<double>());
    const auto yf = apply_activation(of(kind), xf);
    for (std::size_t i = 0; i < x.size(); ++i) {
      EXPECT_NEAR(yf[i], yd[i], 1e-5 * std::max(1.0, std::abs(yd[i]))) << activation_name(kind);
    }
  }
}
