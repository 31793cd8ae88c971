#include "actlab/losses.hpp"

#include <algorithm>
#include <cmath>

namespace actlab {

std::string_view loss_name(LossKind kind) {
  switch (kind) {
    case LossKind::kMse:
      return "mse";
    case LossKind::kMae:
      return "mae";
    case LossKind::kHuber:
      return "huber";
    case LossKind::kCrossEntropy:
      return "cross_entropy";
    case LossKind::kHinge:
      return "hinge";
    case LossKind::kTriplet:
      return "triplet";
  }
  throw ContractError("unknown loss kind");
}

LossKind parse_loss(std::string_view name) {
  for (auto k : {LossKind::kMse, LossKind::kMae, LossKind::kHuber, LossKind::kCrossEntropy, LossKind::kHinge,
                 LossKind::kTriplet}) {
    if (loss_name(k) == name) return k;
  }
  throw ConfigError("unknown loss '" + std::string(name) +
                    "'; expected mse, mae, huber, cross_entropy, hinge or triplet");
}

namespace {

template <typename T>
void check_pair(const Tensor<T>& y, const Tensor<T>& yhat, const char* what) {
  if (y.size() != yhat.size() || y.shape() != yhat.shape()) {
    throw DimensionError(std::string(what) + ": length mismatch " + shape_str(y.shape()) + " vs " +
                         shape_str(yhat.shape()));
  }
  if (y.size() == 0) throw ContractError(std::string(what) + ": empty input");
}

template <typename T, typename F>
LossEval<T> elementwise_mean(const Tensor<T>& y, const Tensor<T>& yhat, const char* what, F&& f) {
  check_pair(y, yhat, what);
  LossEval<T> r{T{0}, Tensor<T>(yhat.shape())};
  const double inv_n = 1.0 / static_cast<double>(y.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const auto [value, dvalue] = f(static_cast<double>(y[i]), static_cast<double>(yhat[i]));
    acc += value;
    r.grad[i] = static_cast<T>(dvalue * inv_n);
  }
  r.value = static_cast<T>(acc * inv_n);
  return r;
}

template <typename T>
void check_logits(const Tensor<T>& logits) {
  if (logits.rank() != 2 || logits.dim(0) == 0 || logits.dim(1) == 0) {
    throw DimensionError("cross_entropy expects logits [n,K], got " + shape_str(logits.shape()));
  }
}

template <typename T>
double row_logsumexp(const T* row, std::size_t k) {
  double mx = static_cast<double>(row[0]);
  for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, static_cast<double>(row[j]));
  double s = 0.0;
  for (std::size_t j = 0; j < k; ++j) s += std::exp(static_cast<double>(row[j]) - mx);
  return mx + std::log(s);
}

}  // namespace

template <typename T>
LossEval<T> mse_eval(const Tensor<T>& y, const Tensor<T>& yhat) {
  return elementwise_mean(y, yhat, "mse", [](double a, double b) {
    const double r = a - b;
    return std::pair{r * r, -2.0 * r};
  });
}

template <typename T>
LossEval<T> mae_eval(const Tensor<T>& y, const Tensor<T>& yhat) {
  return elementwise_mean(y, yhat, "mae", [](double a, double b) {
    const double r = a - b;
    return std::pair{std::abs(r), r > 0.0 ? -1.0 : (r < 0.0 ? 1.0 : 0.0)};
  });
}

template <typename T>
LossEval<T> huber_eval(const Tensor<T>& y, const Tensor<T>& yhat, double delta) {
  if (!(delta > 0.0)) throw ParameterError("huber: delta must be positive");
  return elementwise_mean(y, yhat, "huber", [delta](double a, double b) {
    const double r = a - b;
    if (std::abs(r) <= delta) return std::pair{0.5 * r * r, -r};
    return std::pair{delta * (std::abs(r) - 0.5 * delta), r > 0.0 ? -delta : delta};
  });
}

template <typename T>
LossEval<T> cross_entropy_eval(std::span<const int> labels, const Tensor<T>& logits) {
  check_logits(logits);
  const std::size_t n = logits.dim(0);
  const std::size_t k = logits.dim(1);
  if (labels.size() != n) {
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for " + std::to_string(n) +
                         " rows");
  }
  LossEval<T> r{T{0}, Tensor<T>(logits.shape())};
  const double inv_n = 1.0 / static_cast<double>(n);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const int label = labels[i];
    if (label < 0 || static_cast<std::size_t>(label) >= k) {
      throw ContractError("cross_entropy: label " + std::to_string(label) + " outside [0," + std::to_string(k) + ")");
    }
    const T* row = logits.data().data() + i * k;
    const double lse = row_logsumexp(row, k);
    acc += lse - static_cast<double>(row[label]);
    for (std::size_t j = 0; j < k; ++j) {
      const double p = std::exp(static_cast<double>(row[j]) - lse);
      r.grad[i * k + j] = static_cast<T>((p - (static_cast<int>(j) == label ? 1.0 : 0.0)) * inv_n);
    }
  }
  r.value = static_cast<T>(acc * inv_n);
  return r;
}

template <typename T>
LossEval<T> cross_entropy_eval(const Tensor<T>& targets, const Tensor<T>& logits) {
  check_logits(logits);
  if (targets.shape() != logits.shape()) {
    throw DimensionError("cross_entropy: targets " + shape_str(targets.shape()) + " vs logits " +
                         shape_str(logits.shape()));
  }
  const std::size_t n = logits.dim(0);
  const std::size_t k = logits.dim(1);
  LossEval<T> r{T{0}, Tensor<T>(logits.shape())};
  const double inv_n = 1.0 / static_cast<double>(n);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const T* row = logits.data().data() + i * k;
    const double lse = row_logsumexp(row, k);
    double mass = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      const double t = static_cast<double>(targets[i * k + j]);
      if (t < 0.0) throw ContractError("cross_entropy: negative target probability");
      acc += t * (lse - static_cast<double>(row[j]));
      mass += t;
    }
    for (std::size_t j = 0; j < k; ++j) {
      const double p = std::exp(static_cast<double>(row[j]) - lse);
      r.grad[i * k + j] = static_cast<T>((mass * p - static_cast<double>(targets[i * k + j])) * inv_n);
    }
  }
  r.value = static_cast<T>(acc * inv_n);
  return r;
}

template <typename T>
T cross_entropy_from_probs(const Tensor<T>& targets, const Tensor<T>& probs) {
  check_logits(probs);
  if (targets.shape() != probs.shape()) throw DimensionError("cross_entropy_from_probs: shape mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double t = static_cast<double>(targets[i]);
    if (t != 0.0) acc -= t * std::log(static_cast<double>(probs[i]));
  }
  return static_cast<T>(acc / static_cast<double>(probs.dim(0)));
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& logits) {
  check_logits(logits);
  const std::size_t n = logits.dim(0);
  const std::size_t k = logits.dim(1);
  Tensor<T> out(logits.shape());
  for (std::size_t i = 0; i < n; ++i) {
    const T* row = logits.data().data() + i * k;
    const double lse = row_logsumexp(row, k);
    for (std::size_t j = 0; j < k; ++j) out[i * k + j] = static_cast<T>(std::exp(static_cast<double>(row[j]) - lse));
  }
  return out;
}

template <typename T>
LossEval<T> hinge_eval(const Tensor<T>& y, const Tensor<T>& yhat) {
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] != T{1} && y[i] != T{-1}) throw ContractError("hinge: labels must be -1 or +1");
  }
  return elementwise_mean(y, yhat, "hinge", [](double a, double b) {
    const double m = 1.0 - a * b;
    return m > 0.0 ? std::pair{m, -a} : std::pair{0.0, 0.0};
  });
}

template <typename T>
TripletEval<T> triplet_eval(const Tensor<T>& anchor, const Tensor<T>& positive, const Tensor<T>& negative,
                            double margin) {
  if (!(margin >= 0.0)) throw ParameterError("triplet: margin must be nonnegative");
  if (anchor.size() != positive.size() || anchor.size() != negative.size()) {
    throw DimensionError("triplet: dimension mismatch " + shape_str(anchor.shape()) + ", " +
                         shape_str(positive.shape()) + ", " + shape_str(negative.shape()));
  }
  const std::size_t d = anchor.size();
  double dap2 = 0.0, dan2 = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    const double u = static_cast<double>(anchor[i]) - static_cast<double>(positive[i]);
    const double v = static_cast<double>(anchor[i]) - static_cast<double>(negative[i]);
    dap2 += u * u;
    dan2 += v * v;
  }
  const double dap = std::sqrt(dap2);
  const double dan = std::sqrt(dan2);
  const double raw = dap - dan + margin;
  TripletEval<T> r{static_cast<T>(std::max(raw, 0.0)), Tensor<T>(anchor.shape()), Tensor<T>(positive.shape()),
                   Tensor<T>(negative.shape())};
  if (raw <= 0.0) return r;
  for (std::size_t i = 0; i < d; ++i) {
    // Distance gradients vanish (subgradient 0) where the two points coincide.
    const double gp = dap > 0.0 ? (static_cast<double>(anchor[i]) - static_cast<double>(positive[i])) / dap : 0.0;
    const double gn = dan > 0.0 ? (static_cast<double>(anchor[i]) - static_cast<double>(negative[i])) / dan : 0.0;
    r.grad_anchor[i] = static_cast<T>(gp - gn);
    r.grad_positive[i] = static_cast<T>(-gp);
    r.grad_negative[i] = static_cast<T>(gn);
  }
  return r;
}

#define ACTLAB_INSTANTIATE(T)                                                                          \
  template LossEval<T> mse_eval(const Tensor<T>&, const Tensor<T>&);                                   \
  template LossEval<T> mae_eval(const Tensor<T>&, const Tensor<T>&);                                   \
  template LossEval<T> huber_eval(const Tensor<T>&, const Tensor<T>&, double);                         \
  template LossEval<T> cross_entropy_eval(std::span<const int>, const Tensor<T>&);                     \
  template LossEval<T> cross_entropy_eval(const Tensor<T>&, const Tensor<T>&);                         \
  template LossEval<T> hinge_eval(const Tensor<T>&, const Tensor<T>&);                                 \
  template TripletEval<T> triplet_eval(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, double);  \
  template T cross_entropy_from_probs(const Tensor<T>&, const Tensor<T>&);                             \
  template Tensor<T> softmax(const Tensor<T>&);
ACTLAB_INSTANTIATE(float)
ACTLAB_INSTANTIATE(double)
#undef ACTLAB_INSTANTIATE

}  // namespace actlab
