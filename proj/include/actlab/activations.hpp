#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <string_view>
#include <vector>

#include "actlab/tensor.hpp"

namespace actlab {

enum class ActivationKind {
  kElu,
  kHardshrink,
  kHardsigmoid,
  kHardtanh,
  kHardswish,
  kLeakyRelu,
  kLogSigmoid,
  kPrelu,
  kRelu,
  kRelu6,
  kRrelu,
  kSelu,
  kCelu,
  kGeluTanh,
  kGeluExact,
  kSigmoid,
  kSoftplus,
  kSoftshrink,
  kSoftsign,
  kTanh,
  kTanhshrink,
};

inline constexpr std::array<ActivationKind, 21> kAllActivations = {
    ActivationKind::kElu,       ActivationKind::kHardshrink, ActivationKind::kHardsigmoid, ActivationKind::kHardtanh,
    ActivationKind::kHardswish, ActivationKind::kLeakyRelu,  ActivationKind::kLogSigmoid,  ActivationKind::kPrelu,
    ActivationKind::kRelu,      ActivationKind::kRelu6,      ActivationKind::kRrelu,       ActivationKind::kSelu,
    ActivationKind::kCelu,      ActivationKind::kGeluTanh,   ActivationKind::kGeluExact,   ActivationKind::kSigmoid,
    ActivationKind::kSoftplus,  ActivationKind::kSoftshrink, ActivationKind::kSoftsign,    ActivationKind::kTanh,
    ActivationKind::kTanhshrink,
};

/// Canonical lowercase name used by the CLI and config files ("gelu" is the
/// tanh form, "gelu_exact" the erf form).
std::string_view activation_name(ActivationKind kind);

/// Throws ConfigError listing every accepted name.
ActivationKind parse_activation(std::string_view name);

std::vector<std::string> activation_names();

/// Constants of the tanh-form GELU and the CDF scale of the exact form.
struct GeluConstants {
  double scale = std::sqrt(2.0 / std::numbers::pi);
  double cubic = 0.044715;
  double alpha = 1.0;
};

struct ActivationParams {
  double leaky_slope = 0.01;
  double prelu_init = 0.25;
  double rrelu_lower = 1.0 / 8.0;
  double rrelu_upper = 1.0 / 3.0;
  double elu_alpha = 1.0;
  double celu_alpha = 1.0;
  double selu_alpha = 1.6732632423543772;
  double selu_scale = 1.0507009873554805;
  double shrink_lambda = 0.5;
  double hardtanh_min = -1.0;
  double hardtanh_max = 1.0;
  GeluConstants gelu{};
};

struct Activation {
  ActivationKind kind = ActivationKind::kGeluTanh;
  ActivationParams params{};

  /// Throws ParameterError on an invalid parameter set for this kind.
  void validate() const;
};

enum class Mode { kTrain, kEval };

/// Per-call state. RReLU draws its train-mode slopes from `seed`, so a
/// forward and a derivative call sharing a context see the same slopes.
/// `prelu_slope` is the current value of the learnable PReLU parameter.
struct ActivationContext {
  Mode mode = Mode::kEval;
  std::uint64_t seed = 0;
  double prelu_slope = 0.25;
};

// Scalar helpers ------------------------------------------------------------

template <typename T>
T stable_sigmoid(T z) {
  if (z >= T{0}) return T{1} / (T{1} + std::exp(-z));
  const T e = std::exp(z);
  return e / (T{1} + e);
}

template <typename T>
T normal_cdf(T x) {
  return T{0.5} * std::erfc(-x / std::numbers::sqrt2_v<T>);
}

template <typename T>
T normal_pdf(T x) {
  return std::exp(T{-0.5} * x * x) / std::sqrt(T{2} * std::numbers::pi_v<T>);
}

/// 0.5 x (1 + tanh(u)), u = scale (x + cubic x^3). Evaluated as x sigmoid(2u),
/// which equals it exactly and keeps the tail below zero instead of
/// cancelling to 0.
template <typename T>
T gelu_tanh(T x, const GeluConstants& c = {}) {
  const T u = static_cast<T>(c.scale) * (x + static_cast<T>(c.cubic) * x * x * x);
  return x * stable_sigmoid(T{2} * u);
}

template <typename T>
T gelu_derivative_tanh(T x, const GeluConstants& c = {}) {
  const T scale = static_cast<T>(c.scale);
  const T cubic = static_cast<T>(c.cubic);
  const T u = scale * (x + cubic * x * x * x);
  const T s_pos = stable_sigmoid(T{2} * u);
  const T s_neg = stable_sigmoid(T{-2} * u);
  // 0.5 sech^2(u) == 2 sigmoid(2u) sigmoid(-2u)
  const T half_sech2 = T{2} * s_pos * s_neg;
  return s_pos + x * half_sech2 * scale * (T{1} + T{3} * cubic * x * x);
}

/// x Phi(alpha x). Throws ParameterError for alpha <= 0.
template <typename T>
T gelu_exact(T x, T alpha = T{1}) {
  if (!(alpha > T{0})) throw ParameterError("gelu_exact: alpha must be positive");
  return x * normal_cdf(alpha * x);
}

template <typename T>
T gelu_derivative_exact(T x, T alpha = T{1}) {
  if (!(alpha > T{0})) throw ParameterError("gelu_derivative_exact: alpha must be positive");
  return alpha * x * normal_pdf(alpha * x) + normal_cdf(alpha * x);
}

/// Value of one activation at one point. `slope` is the PReLU parameter or the
/// RReLU slope for this element; other kinds ignore it.
template <typename T>
T activation_value(const Activation& act, T x, T slope = T{0});

/// Derivative matching activation_value, with the fixed one-sided values at
/// kinks (ReLU'(0) = 0, flat side of hard-clipped kinds, outer side of shrinks).
template <typename T>
T activation_grad(const Activation& act, T x, T slope = T{0});

/// Slopes the RReLU forward uses for `count` elements under `ctx`: uniform in
/// [lower, upper] in train mode, the midpoint in eval mode.
std::vector<double> rrelu_slopes(const Activation& act, std::size_t count, const ActivationContext& ctx);

template <typename T>
Tensor<T> apply_activation(const Activation& act, const Tensor<T>& x, const ActivationContext& ctx = {});

template <typename T>
Tensor<T> activation_derivative(const Activation& act, const Tensor<T>& x, const ActivationContext& ctx = {});

/// True for kinds that are nondecreasing over all of R.
bool is_monotone(ActivationKind kind);

/// Points where a kind's derivative is discontinuous under default params.
std::vector<double> activation_kinks(const Activation& act);

}  // namespace actlab
