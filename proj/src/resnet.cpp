#include "actlab/resnet.hpp"

#include <cmath>
#include <random>
#include <sstream>

namespace actlab {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

NetworkConfig NetworkConfig::narrowed(std::size_t divisor) const {
  NetworkConfig c = *this;
  const auto shrink = [divisor](std::size_t w) { return std::max<std::size_t>(1, w / std::max<std::size_t>(1, divisor)); };
  c.stem_width = shrink(stem_width);
  for (auto& b : c.blocks) b.width = shrink(b.width);
  return c;
}

void NetworkConfig::validate() const {
  activation.validate();
  if (blocks.size() != kResidualBlocks) {
    throw ConfigError("network needs exactly 6 residual blocks, got " + std::to_string(blocks.size()));
  }
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    if (blocks[i].stride != kBlockStrides[i]) {
      throw ConfigError("block " + std::to_string(i + 1) + " stride must be " + std::to_string(kBlockStrides[i]) +
                        " (strides are 1,1,2,1,2,1)");
    }
    if (blocks[i].width == 0) throw ConfigError("block " + std::to_string(i + 1) + " has zero width");
  }
  if (in_channels == 0 || stem_width == 0 || num_classes == 0) {
    throw ConfigError("network channel counts and num_classes must be positive");
  }
  if (norm == NormKind::kGroup) {
    std::vector<std::size_t> widths{stem_width};
    for (const auto& b : blocks) widths.push_back(b.width);
    for (std::size_t w : widths) {
      if (norm_groups == 0 || w % norm_groups != 0) {
        throw ConfigError("group norm: width " + std::to_string(w) + " not divisible by " +
                          std::to_string(norm_groups) + " groups");
      }
    }
  }
}

template <typename T>
std::size_t Network<T>::add_param(std::string name, Tensor<T> value) {
  params_.push_back(std::move(value));
  names_.push_back(std::move(name));
  return params_.size() - 1;
}

template <typename T>
typename Network<T>::NormSite Network<T>::add_norm(const std::string& name, std::size_t channels) {
  NormLayer<T> layer;
  switch (config_.norm) {
    case NormKind::kBatch:
      layer = NormLayer<T>::batch(channels);
      break;
    case NormKind::kLayer:
      layer = NormLayer<T>::group(channels, 1);
      break;
    case NormKind::kGroup:
      layer = NormLayer<T>::group(channels, config_.norm_groups);
      break;
  }
  NormSite site;
  site.gamma = add_param(name + ".gamma", layer.gamma);
  site.beta = add_param(name + ".beta", layer.beta);
  site.state = norms_.size();
  norms_.push_back(std::move(layer));
  return site;
}

template <typename T>
typename Network<T>::ActSite Network<T>::add_act(const std::string& name) {
  ActSite site;
  site.index = act_sites_++;
  if (config_.activation.kind == ActivationKind::kPrelu) {
    site.slope = add_param(name + ".prelu_slope",
                           Tensor<T>({1}, static_cast<T>(config_.activation.params.prelu_init)));
  }
  return site;
}

template <typename T>
Network<T>::Network(NetworkConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  std::mt19937_64 rng(seed);
  const auto he_normal = [&rng](Shape shape, std::size_t fan_in) {
    return random_normal<T>(std::move(shape), rng, std::sqrt(2.0 / static_cast<double>(fan_in)));
  };
  const auto conv = [&](const std::string& name, std::size_t out, std::size_t in, std::size_t k) {
    const std::size_t w = add_param(name + ".weight", he_normal({out, in, k, k}, in * k * k));
    const std::size_t b = add_param(name + ".bias", Tensor<T>({out}));
    return std::pair{w, b};
  };

  std::tie(stem_w_, stem_b_) = conv("stem", config_.stem_width, config_.in_channels, 3);
  std::size_t channels = config_.stem_width;
  for (std::size_t i = 0; i < config_.blocks.size(); ++i) {
    const auto& spec = config_.blocks[i];
    const std::string name = "block" + std::to_string(i + 1);
    Block b;
    b.stride = spec.stride;
    b.norm1 = add_norm(name + ".norm1", channels);
    b.act1 = add_act(name + ".act1");
    std::tie(b.conv1_w, b.conv1_b) = conv(name + ".conv1", spec.width, channels, 3);
    b.norm2 = add_norm(name + ".norm2", spec.width);
    b.act2 = add_act(name + ".act2");
    std::tie(b.conv2_w, b.conv2_b) = conv(name + ".conv2", spec.width, spec.width, 3);
    if (spec.stride != 1 || spec.width != channels) {
      auto [pw, pb] = conv(name + ".shortcut", spec.width, channels, 1);
      b.projection_w = pw;
      b.projection_b = pb;
    }
    blocks_.push_back(b);
    channels = spec.width;
  }
  final_norm_ = add_norm("head.norm", channels);
  final_act_ = add_act("head.act");
  dense_w_ = add_param("head.dense.weight", config_.zero_classifier
                                                ? Tensor<T>({config_.num_classes, channels})
                                                : he_normal({config_.num_classes, channels}, channels));
  dense_b_ = add_param("head.dense.bias", Tensor<T>({config_.num_classes}));
}

template <typename T>
typename Network<T>::Pass Network<T>::bind(Graph<T>& g, bool differentiable, std::uint64_t step_seed) const {
  Pass pass;
  pass.seed = step_seed;
  pass.leaves.reserve(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i) {
    pass.leaves.push_back(differentiable ? g.leaf(params_[i], names_[i]) : g.constant(params_[i], names_[i]));
  }
  return pass;
}

template <typename T>
Var Network<T>::apply_norm(Graph<T>& g, const Pass& pass, Var x, const NormSite& site, Mode mode) {
  return g.norm(x, pass.leaves[site.gamma], pass.leaves[site.beta], norms_[site.state], mode);
}

template <typename T>
Var Network<T>::apply_act(Graph<T>& g, const Pass& pass, Var x, const ActSite& site, Mode mode) {
  ActivationContext ctx;
  ctx.mode = mode;
  ctx.seed = mix_seed(pass.seed, site.index);
  std::optional<Var> slope;
  if (site.slope) slope = pass.leaves[*site.slope];
  return g.activation(x, config_.activation, ctx, slope);
}

template <typename T>
Var Network<T>::stem(Graph<T>& g, const Pass& pass, Var images) {
  g.set_scope("stem");
  return g.conv2d(images, pass.leaves[stem_w_], pass.leaves[stem_b_], {1, 1});
}

template <typename T>
Var Network<T>::block(Graph<T>& g, const Pass& pass, Var x, std::size_t index, Mode mode) {
  const Block& b = blocks_.at(index);
  const std::string scope = "block" + std::to_string(index + 1);
  g.set_scope(scope + ".layer1");
  Var h = apply_norm(g, pass, x, b.norm1, mode);
  h = apply_act(g, pass, h, b.act1, mode);
  h = g.conv2d(h, pass.leaves[b.conv1_w], pass.leaves[b.conv1_b], {b.stride, 1});
  g.set_scope(scope + ".layer2");
  h = apply_norm(g, pass, h, b.norm2, mode);
  h = apply_act(g, pass, h, b.act2, mode);
  h = g.conv2d(h, pass.leaves[b.conv2_w], pass.leaves[b.conv2_b], {1, 1});
  g.set_scope(scope + ".shortcut");
  Var skip = x;
  if (b.projection_w) skip = g.conv2d(x, pass.leaves[*b.projection_w], pass.leaves[*b.projection_b], {b.stride, 0});
  g.set_scope(scope);
  return g.add(h, skip);
}

template <typename T>
Var Network<T>::head(Graph<T>& g, const Pass& pass, Var x, Mode mode) {
  g.set_scope("head");
  Var h = apply_norm(g, pass, x, final_norm_, mode);
  h = apply_act(g, pass, h, final_act_, mode);
  h = g.global_avg_pool(h);
  return g.linear(h, pass.leaves[dense_w_], pass.leaves[dense_b_]);
}

template <typename T>
Var Network<T>::forward(Graph<T>& g, const Pass& pass, Var images, Mode mode) {
  const auto& shape = g.value(images).shape();
  if (shape.size() != 4 || shape[1] != config_.in_channels) {
    throw DimensionError("network input must be [N," + std::to_string(config_.in_channels) + ",H,W], got " +
                         shape_str(shape));
  }
  if (shape[2] < 8 || shape[3] < 8) throw DimensionError("network input must be at least 8x8");
  Var h = stem(g, pass, images);
  for (std::size_t i = 0; i < blocks_.size(); ++i) h = block(g, pass, h, i, mode);
  Var logits = head(g, pass, h, mode);
  g.set_scope({});
  return logits;
}

template <typename T>
Tensor<T> Network<T>::predict(const Tensor<T>& images, Mode mode) {
  Graph<T> g;
  Pass pass = bind(g, false);
  Var x = g.constant(images, "images");
  return g.value(forward(g, pass, x, mode));
}

template <typename T>
std::size_t Network<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.size();
  return n;
}

template <typename T>
std::size_t Network<T>::parameter_index(const std::string& name) const {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return i;
  }
  throw ContractError("no parameter named '" + name + "'");
}

template <typename T>
std::size_t Network<T>::layer_census() const {
  return 1 + 2 * blocks_.size() + 1;
}

template <typename T>
std::string Network<T>::summary(std::size_t height, std::size_t width) const {
  std::ostringstream os;
  const auto row = [&os](const std::string& layer, const Shape& out, std::size_t params, bool counted) {
    os << (counted ? "* " : "  ") << layer;
    for (std::size_t pad = layer.size(); pad < 28; ++pad) os << ' ';
    os << shape_str(out);
    for (std::size_t pad = shape_str(out).size(); pad < 20; ++pad) os << ' ';
    os << params << '\n';
  };
  const auto count = [this](std::size_t w, std::size_t b) { return params_[w].size() + params_[b].size(); };
  const auto norm_count = [this](const NormSite& s) { return params_[s.gamma].size() + params_[s.beta].size(); };
  os << "  layer                       output              params\n";
  std::size_t h = height, w = width, c = config_.stem_width;
  row("stem.conv3x3", {1, c, h, w}, count(stem_w_, stem_b_), true);
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const Block& b = blocks_[i];
    const std::string name = "block" + std::to_string(i + 1);
    const std::size_t in_c = c;
    c = config_.blocks[i].width;
    row(name + ".norm1", {1, in_c, h, w}, norm_count(b.norm1), false);
    h = (h + 2 - 3) / b.stride + 1;
    w = (w + 2 - 3) / b.stride + 1;
    row(name + ".conv1", {1, c, h, w}, count(b.conv1_w, b.conv1_b), true);
    row(name + ".norm2", {1, c, h, w}, norm_count(b.norm2), false);
    row(name + ".conv2", {1, c, h, w}, count(b.conv2_w, b.conv2_b), true);
    if (b.projection_w) row(name + ".shortcut1x1", {1, c, h, w}, count(*b.projection_w, *b.projection_b), false);
  }
  row("head.norm", {1, c, h, w}, norm_count(final_norm_), false);
  row("head.avgpool", {1, c, 1, 1}, 0, false);
  row("head.dense", {1, config_.num_classes}, count(dense_w_, dense_b_), true);
  os << "activation: " << activation_name(config_.activation.kind) << ", norm: " << norm_name(config_.norm) << '\n';
  os << "counted layers (*): " << layer_census() << ", parameters: " << parameter_count() << '\n';
  return os.str();
}

template class Network<float>;
template class Network<double>;

}  // namespace actlab
