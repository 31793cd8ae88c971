#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "actlab/activations.hpp"
#include "actlab/autodiff.hpp"
#include "actlab/normalization.hpp"
#include "actlab/tensor.hpp"

namespace actlab {

struct BlockSpec {
  std::size_t width = 64;
  std::size_t stride = 1;
};

/// Pre-activated residual classifier: stem conv, six residual blocks of two
/// (norm -> activation -> 3x3 conv) sub-layers, final norm -> activation,
/// global average pool, dense classifier.
struct NetworkConfig {
  Activation activation{};
  NormKind norm = NormKind::kBatch;
  /// Groups for NormKind::kGroup. NormKind::kLayer normalizes each sample
  /// over (C,H,W), i.e. one group.
  std::size_t norm_groups = 32;
  std::size_t in_channels = 3;
  std::size_t stem_width = 64;
  std::vector<BlockSpec> blocks = {{64, 1}, {64, 1}, {128, 2}, {128, 1}, {256, 2}, {256, 1}};
  std::size_t num_classes = 10;
  /// Start the classifier at zero weights (uniform logits).
  bool zero_classifier = false;

  /// Same topology with every width divided by `divisor` (at least 1).
  NetworkConfig narrowed(std::size_t divisor) const;

  /// Throws ConfigError naming the violated invariant.
  void validate() const;
};

inline constexpr std::size_t kResidualBlocks = 6;
inline constexpr std::array<std::size_t, kResidualBlocks> kBlockStrides = {1, 1, 2, 1, 2, 1};

template <typename T>
class Network {
 public:
  /// Deterministic initialization from `seed`: fan-in scaled normal weights
  /// (gain sqrt 2), zero biases, gamma = 1, beta = 0.
  Network(NetworkConfig config, std::uint64_t seed);

  const NetworkConfig& config() const { return config_; }

  /// Leaves registered for one forward pass, aligned with parameters().
  struct Pass {
    std::vector<Var> leaves;
    std::uint64_t seed = 0;
  };

  /// Registers parameters on `g` as differentiable leaves (or constants).
  Pass bind(Graph<T>& g, bool differentiable, std::uint64_t step_seed = 0) const;

  /// Full forward; returns logits [N, num_classes]. Batch norm in train mode
  /// updates running statistics. `step_seed` drives RReLU sampling.
  Var forward(Graph<T>& g, const Pass& pass, Var images, Mode mode);

  Var stem(Graph<T>& g, const Pass& pass, Var images);
  Var block(Graph<T>& g, const Pass& pass, Var x, std::size_t index, Mode mode);
  Var head(Graph<T>& g, const Pass& pass, Var x, Mode mode);

  /// Logits without recording gradients.
  Tensor<T> predict(const Tensor<T>& images, Mode mode = Mode::kEval);

  std::vector<Tensor<T>>& parameters() { return params_; }
  const std::vector<Tensor<T>>& parameters() const { return params_; }
  const std::vector<std::string>& parameter_names() const { return names_; }
  std::size_t parameter_count() const;
  std::size_t parameter_index(const std::string& name) const;

  /// Weight layers counted toward the depth: stem conv, 12 block convs,
  /// classifier. Projection shortcuts are not counted.
  std::size_t layer_census() const;

  bool has_projection(std::size_t block) const { return blocks_.at(block).projection_w.has_value(); }

  std::vector<NormLayer<T>>& norm_layers() { return norms_; }

  /// Layer table with output shapes for an [1, C, height, width] input.
  std::string summary(std::size_t height = 32, std::size_t width = 32) const;

 private:
  struct NormSite {
    std::size_t state = 0;  // index into norms_
    std::size_t gamma = 0;
    std::size_t beta = 0;
  };
  struct ActSite {
    std::size_t index = 0;              // call-site number for RReLU seeding
    std::optional<std::size_t> slope;   // PReLU parameter
  };
  struct Block {
    NormSite norm1, norm2;
    ActSite act1, act2;
    std::size_t conv1_w = 0, conv1_b = 0, conv2_w = 0, conv2_b = 0;
    std::optional<std::size_t> projection_w, projection_b;
    std::size_t stride = 1;
  };

  std::size_t add_param(std::string name, Tensor<T> value);
  NormSite add_norm(const std::string& name, std::size_t channels);
  ActSite add_act(const std::string& name);
  Var apply_norm(Graph<T>& g, const Pass& pass, Var x, const NormSite& site, Mode mode);
  Var apply_act(Graph<T>& g, const Pass& pass, Var x, const ActSite& site, Mode mode);

  NetworkConfig config_;
  std::vector<Tensor<T>> params_;
  std::vector<std::string> names_;
  std::vector<NormLayer<T>> norms_;
  std::size_t act_sites_ = 0;
  std::size_t stem_w_ = 0, stem_b_ = 0;
  std::vector<Block> blocks_;
  NormSite final_norm_;
  ActSite final_act_;
  std::size_t dense_w_ = 0, dense_b_ = 0;
};

/// splitmix64 finalizer; derives independent seeds from (seed, stream).
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace actlab
