#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "actlab/activations.hpp"
#include "actlab/tensor.hpp"

namespace actlab {

enum class NormKind { kBatch, kLayer, kGroup };

std::string_view norm_name(NormKind kind);
NormKind parse_norm(std::string_view name);

/// Affine parameters and running state of one normalization layer.
///
/// batch: x [N,C,...], statistics per channel over batch and spatial axes.
/// layer: statistics per sample over the trailing axes matching gamma's shape.
/// group: x [N,C,...], statistics per (sample, group of C/G channels);
///        gamma/beta are per channel.
template <typename T>
struct NormLayer {
  NormKind kind = NormKind::kBatch;
  Tensor<T> gamma;
  Tensor<T> beta;
  double epsilon = 1e-5;
  std::size_t groups = 1;
  Tensor<T> running_mean;
  Tensor<T> running_var;
  double momentum = 0.1;
  /// Set when a train-mode batch norm saw a single value per channel.
  std::vector<std::string> warnings;

  static NormLayer batch(std::size_t channels);
  static NormLayer layer(Shape feature_shape);
  static NormLayer group(std::size_t channels, std::size_t groups);

  /// Throws ConfigError for a broken invariant (epsilon <= 0, C mod G != 0, ...).
  void validate() const;
};

/// Forward output plus what the backward pass needs.
template <typename T>
struct NormResult {
  Tensor<T> output;
  Tensor<T> normalized;          // pre-affine x-hat
  std::vector<double> inv_std;   // per region
  std::vector<std::size_t> region_size;
  bool used_running_stats = false;
};

template <typename T>
struct NormGrads {
  Tensor<T> input;
  Tensor<T> gamma;
  Tensor<T> beta;
};

/// Dispatches on layer.kind. Batch norm in train mode updates running stats.
template <typename T>
NormResult<T> normalize(const Tensor<T>& x, NormLayer<T>& layer, Mode mode);

template <typename T>
NormGrads<T> normalize_backward(const Tensor<T>& x, const NormLayer<T>& layer, const NormResult<T>& saved,
                                const Tensor<T>& grad_out);

template <typename T>
Tensor<T> batch_norm_forward(const Tensor<T>& x, NormLayer<T>& layer, Mode mode) {
  if (layer.kind != NormKind::kBatch) throw ConfigError("batch_norm_forward on a non-batch layer");
  return normalize(x, layer, mode).output;
}

template <typename T>
Tensor<T> layer_norm_forward(const Tensor<T>& x, const NormLayer<T>& layer) {
  if (layer.kind != NormKind::kLayer) throw ConfigError("layer_norm_forward on a non-layer layer");
  auto copy = layer;
  return normalize(x, copy, Mode::kTrain).output;
}

template <typename T>
Tensor<T> group_norm_forward(const Tensor<T>& x, const NormLayer<T>& layer) {
  if (layer.kind != NormKind::kGroup) throw ConfigError("group_norm_forward on a non-group layer");
  auto copy = layer;
  return normalize(x, copy, Mode::kTrain).output;
}

}  // namespace actlab
