#include "actlab/activations.hpp"

#include <algorithm>
#include <random>

namespace actlab {

namespace {

struct NamedKind {
  ActivationKind kind;
  std::string_view name;
};

constexpr std::array<NamedKind, 21> kNames = {{
    {ActivationKind::kElu, "elu"},
    {ActivationKind::kHardshrink, "hardshrink"},
    {ActivationKind::kHardsigmoid, "hardsigmoid"},
    {ActivationKind::kHardtanh, "hardtanh"},
    {ActivationKind::kHardswish, "hardswish"},
    {ActivationKind::kLeakyRelu, "leaky_relu"},
    {ActivationKind::kLogSigmoid, "logsigmoid"},
    {ActivationKind::kPrelu, "prelu"},
    {ActivationKind::kRelu, "relu"},
    {ActivationKind::kRelu6, "relu6"},
    {ActivationKind::kRrelu, "rrelu"},
    {ActivationKind::kSelu, "selu"},
    {ActivationKind::kCelu, "celu"},
    {ActivationKind::kGeluTanh, "gelu"},
    {ActivationKind::kGeluExact, "gelu_exact"},
    {ActivationKind::kSigmoid, "sigmoid"},
    {ActivationKind::kSoftplus, "softplus"},
    {ActivationKind::kSoftshrink, "softshrink"},
    {ActivationKind::kSoftsign, "softsign"},
    {ActivationKind::kTanh, "tanh"},
    {ActivationKind::kTanhshrink, "tanhshrink"},
}};

template <typename T>
T softplus(T x) {
  return std::log1p(std::exp(-std::abs(x))) + std::max(x, T{0});
}

}  // namespace

std::string_view activation_name(ActivationKind kind) {
  for (const auto& nk : kNames) {
    if (nk.kind == kind) return nk.name;
  }
  throw ContractError("unknown activation kind");
}

std::vector<std::string> activation_names() {
  std::vector<std::string> out;
  for (const auto& nk : kNames) out.emplace_back(nk.name);
  return out;
}

ActivationKind parse_activation(std::string_view name) {
  for (const auto& nk : kNames) {
    if (nk.name == name) return nk.kind;
  }
  std::string msg = "unknown activation '" + std::string(name) + "'; expected one of:";
  for (const auto& nk : kNames) msg += " " + std::string(nk.name);
  throw ConfigError(msg);
}

void Activation::validate() const {
  const auto& p = params;
  switch (kind) {
    case ActivationKind::kRrelu:
      if (!(0.0 <= p.rrelu_lower && p.rrelu_lower < p.rrelu_upper && p.rrelu_upper < 1.0)) {
        throw ParameterError("rrelu bounds must satisfy 0 <= lower < upper < 1");
      }
      break;
    case ActivationKind::kElu:
      if (!(p.elu_alpha > 0.0)) throw ParameterError("elu alpha must be positive");
      break;
    case ActivationKind::kCelu:
      if (!(p.celu_alpha > 0.0)) throw ParameterError("celu alpha must be positive");
      break;
    case ActivationKind::kHardshrink:
    case ActivationKind::kSoftshrink:
      if (!(p.shrink_lambda >= 0.0)) throw ParameterError("shrink lambda must be nonnegative");
      break;
    case ActivationKind::kHardtanh:
      if (!(p.hardtanh_min < p.hardtanh_max)) throw ParameterError("hardtanh needs min < max");
      break;
    case ActivationKind::kGeluExact:
      if (!(p.gelu.alpha > 0.0)) throw ParameterError("gelu alpha must be positive");
      break;
    default:
      break;
  }
}

template <typename T>
T activation_value(const Activation& act, T x, T slope) {
  const auto& p = act.params;
  switch (act.kind) {
    case ActivationKind::kElu:
      return x > T{0} ? x : static_cast<T>(p.elu_alpha) * std::expm1(x);
    case ActivationKind::kHardshrink:
      return std::abs(x) > static_cast<T>(p.shrink_lambda) ? x : T{0};
    case ActivationKind::kHardsigmoid:
      return std::clamp(x / T{6} + T{0.5}, T{0}, T{1});
    case ActivationKind::kHardtanh:
      return std::clamp(x, static_cast<T>(p.hardtanh_min), static_cast<T>(p.hardtanh_max));
    case ActivationKind::kHardswish:
      return x * std::clamp(x + T{3}, T{0}, T{6}) / T{6};
    case ActivationKind::kLeakyRelu:
      return x > T{0} ? x : static_cast<T>(p.leaky_slope) * x;
    case ActivationKind::kLogSigmoid:
      return -softplus(-x);
    case ActivationKind::kPrelu:
    case ActivationKind::kRrelu:
      return x > T{0} ? x : slope * x;
    case ActivationKind::kRelu:
      return std::max(x, T{0});
    case ActivationKind::kRelu6:
      return std::min(std::max(x, T{0}), T{6});
    case ActivationKind::kSelu:
      return static_cast<T>(p.selu_scale) * (x > T{0} ? x : static_cast<T>(p.selu_alpha) * std::expm1(x));
    case ActivationKind::kCelu: {
      const T a = static_cast<T>(p.celu_alpha);
      return std::max(x, T{0}) + std::min(T{0}, a * std::expm1(x / a));
    }
    case ActivationKind::kGeluTanh:
      return gelu_tanh(x, p.gelu);
    case ActivationKind::kGeluExact:
      return gelu_exact(x, static_cast<T>(p.gelu.alpha));
    case ActivationKind::kSigmoid:
      return stable_sigmoid(x);
    case ActivationKind::kSoftplus:
      return softplus(x);
    case ActivationKind::kSoftshrink: {
      const T l = static_cast<T>(p.shrink_lambda);
      if (x > l) return x - l;
      if (x < -l) return x + l;
      return T{0};
    }
    case ActivationKind::kSoftsign:
      return x / (T{1} + std::abs(x));
    case ActivationKind::kTanh:
      return std::tanh(x);
    case ActivationKind::kTanhshrink:
      return x - std::tanh(x);
  }
  throw ContractError("unknown activation kind");
}

template <typename T>
T activation_grad(const Activation& act, T x, T slope) {
  const auto& p = act.params;
  switch (act.kind) {
    case ActivationKind::kElu:
      return x > T{0} ? T{1} : static_cast<T>(p.elu_alpha) * std::exp(x);
    case ActivationKind::kHardshrink:
      return std::abs(x) >= static_cast<T>(p.shrink_lambda) ? T{1} : T{0};
    case ActivationKind::kHardsigmoid:
      return (x > T{-3} && x < T{3}) ? T{1} / T{6} : T{0};
    case ActivationKind::kHardtanh:
      return (x > static_cast<T>(p.hardtanh_min) && x < static_cast<T>(p.hardtanh_max)) ? T{1} : T{0};
    case ActivationKind::kHardswish:
      if (x <= T{-3}) return T{0};
      if (x >= T{3}) return T{1};
      return (T{2} * x + T{3}) / T{6};
    case ActivationKind::kLeakyRelu:
      return x > T{0} ? T{1} : static_cast<T>(p.leaky_slope);
    case ActivationKind::kLogSigmoid:
      return stable_sigmoid(-x);
    case ActivationKind::kPrelu:
    case ActivationKind::kRrelu:
      return x > T{0} ? T{1} : slope;
    case ActivationKind::kRelu:
      return x > T{0} ? T{1} : T{0};
    case ActivationKind::kRelu6:
      return (x > T{0} && x < T{6}) ? T{1} : T{0};
    case ActivationKind::kSelu:
      return static_cast<T>(p.selu_scale) * (x > T{0} ? T{1} : static_cast<T>(p.selu_alpha) * std::exp(x));
    case ActivationKind::kCelu:
      return x > T{0} ? T{1} : std::exp(x / static_cast<T>(p.celu_alpha));
    case ActivationKind::kGeluTanh:
      return gelu_derivative_tanh(x, p.gelu);
    case ActivationKind::kGeluExact:
      return gelu_derivative_exact(x, static_cast<T>(p.gelu.alpha));
    case ActivationKind::kSigmoid: {
      return stable_sigmoid(x) * stable_sigmoid(-x);
    }
    case ActivationKind::kSoftplus:
      return stable_sigmoid(x);
    case ActivationKind::kSoftshrink:
      return std::abs(x) >= static_cast<T>(p.shrink_lambda) ? T{1} : T{0};
    case ActivationKind::kSoftsign: {
      const T d = T{1} + std::abs(x);
      return T{1} / (d * d);
    }
    case ActivationKind::kTanh: {
      const T t = std::tanh(x);
      return T{1} - t * t;
    }
    case ActivationKind::kTanhshrink: {
      const T t = std::tanh(x);
      return t * t;
    }
  }
  throw ContractError("unknown activation kind");
}

std::vector<double> rrelu_slopes(const Activation& act, std::size_t count, const ActivationContext& ctx) {
  const double lo = act.params.rrelu_lower;
  const double hi = act.params.rrelu_upper;
  if (ctx.mode == Mode::kEval) return std::vector<double>(count, 0.5 * (lo + hi));
  std::mt19937_64 rng(ctx.seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> out(count);
  for (auto& s : out) s = dist(rng);
  return out;
}

namespace {

template <typename T, typename F>
Tensor<T> map_with_slopes(const Activation& act, const Tensor<T>& x, const ActivationContext& ctx, F&& f) {
  act.validate();
  Tensor<T> out(x.shape());
  auto src = x.data();
  auto dst = out.data();
  if (act.kind == ActivationKind::kRrelu) {
    const auto slopes = rrelu_slopes(act, x.size(), ctx);
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = f(src[i], static_cast<T>(slopes[i]));
  } else {
    const T slope = static_cast<T>(act.kind == ActivationKind::kPrelu ? ctx.prelu_slope : 0.0);
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = f(src[i], slope);
  }
  return out;
}

}  // namespace

template <typename T>
Tensor<T> apply_activation(const Activation& act, const Tensor<T>& x, const ActivationContext& ctx) {
  return map_with_slopes(act, x, ctx, [&](T v, T s) { return activation_value(act, v, s); });
}

template <typename T>
Tensor<T> activation_derivative(const Activation& act, const Tensor<T>& x, const ActivationContext& ctx) {
  return map_with_slopes(act, x, ctx, [&](T v, T s) { return activation_grad(act, v, s); });
}

bool is_monotone(ActivationKind kind) {
  switch (kind) {
    case ActivationKind::kSigmoid:
    case ActivationKind::kTanh:
    case ActivationKind::kSoftplus:
    case ActivationKind::kSoftsign:
    case ActivationKind::kHardsigmoid:
    case ActivationKind::kHardtanh:
    case ActivationKind::kLogSigmoid:
    case ActivationKind::kRelu:
    case ActivationKind::kRelu6:
    case ActivationKind::kElu:
    case ActivationKind::kSelu:
    case ActivationKind::kCelu:
    case ActivationKind::kLeakyRelu:
      return true;
    default:
      return false;
  }
}

std::vector<double> activation_kinks(const Activation& act) {
  const auto& p = act.params;
  switch (act.kind) {
    case ActivationKind::kElu:
    case ActivationKind::kCelu:
    case ActivationKind::kSelu:
    case ActivationKind::kLeakyRelu:
    case ActivationKind::kPrelu:
    case ActivationKind::kRrelu:
    case ActivationKind::kRelu:
      return {0.0};
    case ActivationKind::kRelu6:
      return {0.0, 6.0};
    case ActivationKind::kHardsigmoid:
    case ActivationKind::kHardswish:
      return {-3.0, 3.0};
    case ActivationKind::kHardtanh:
      return {p.hardtanh_min, p.hardtanh_max};
    case ActivationKind::kHardshrink:
    case ActivationKind::kSoftshrink:
      return {-p.shrink_lambda, p.shrink_lambda};
    default:
      return {};
  }
}

#define ACTLAB_INSTANTIATE(T)                                                                             \
  template T activation_value<T>(const Activation&, T, T);                                                \
  template T activation_grad<T>(const Activation&, T, T);                                                 \
  template Tensor<T> apply_activation<T>(const Activation&, const Tensor<T>&, const ActivationContext&);  \
  template Tensor<T> activation_derivative<T>(const Activation&, const Tensor<T>&, const ActivationContext&);
ACTLAB_INSTANTIATE(float)
ACTLAB_INSTANTIATE(double)
#undef ACTLAB_INSTANTIATE

}  // namespace actlab
