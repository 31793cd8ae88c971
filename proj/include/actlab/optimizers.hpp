#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "actlab/tensor.hpp"

namespace actlab {

enum class OptimizerKind { kSgd, kAdam };

std::string_view optimizer_name(OptimizerKind kind);
OptimizerKind parse_optimizer(std::string_view name);

struct SgdConfig {
  double eta = 0.01;
};

/// theta <- theta - eta * grad, per tensor. Throws DimensionError on a
/// parameter/gradient mismatch and ParameterError for eta <= 0.
template <typename T>
void sgd_step(std::vector<Tensor<T>>& theta, const std::vector<Tensor<T>>& grads, const SgdConfig& config);

struct AdamConfig {
  double eta = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Moment buffers for one parameter set. Moments are kept in double
/// regardless of the parameter precision.
struct AdamState {
  AdamConfig config{};
  std::uint64_t t = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;

  explicit AdamState(AdamConfig cfg = {}) : config(cfg) {}
  void validate() const;
};

/// One Adam update; t is incremented before bias correction so the first
/// step uses t = 1. A non-finite gradient throws NonFiniteError and leaves
/// both the state and theta untouched.
template <typename T>
void adam_step(AdamState& state, std::vector<Tensor<T>>& theta, const std::vector<Tensor<T>>& grads);

}  // namespace actlab
