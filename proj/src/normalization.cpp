#include "actlab/normalization.hpp"

#include <cmath>

namespace actlab {

std::string_view norm_name(NormKind kind) {
  switch (kind) {
    case NormKind::kBatch:
      return "batch";
    case NormKind::kLayer:
      return "layer";
    case NormKind::kGroup:
      return "group";
  }
  throw ContractError("unknown norm kind");
}

NormKind parse_norm(std::string_view name) {
  if (name == "batch") return NormKind::kBatch;
  if (name == "layer") return NormKind::kLayer;
  if (name == "group") return NormKind::kGroup;
  throw ConfigError("unknown norm '" + std::string(name) + "'; expected batch, layer or group");
}

template <typename T>
NormLayer<T> NormLayer<T>::batch(std::size_t channels) {
  NormLayer l;
  l.kind = NormKind::kBatch;
  l.gamma = Tensor<T>({channels}, T{1});
  l.beta = Tensor<T>({channels}, T{0});
  l.running_mean = Tensor<T>({channels}, T{0});
  l.running_var = Tensor<T>({channels}, T{1});
  return l;
}

template <typename T>
NormLayer<T> NormLayer<T>::layer(Shape feature_shape) {
  NormLayer l;
  l.kind = NormKind::kLayer;
  l.gamma = Tensor<T>(feature_shape, T{1});
  l.beta = Tensor<T>(feature_shape, T{0});
  return l;
}

template <typename T>
NormLayer<T> NormLayer<T>::group(std::size_t channels, std::size_t groups) {
  NormLayer l;
  l.kind = NormKind::kGroup;
  l.groups = groups;
  l.gamma = Tensor<T>({channels}, T{1});
  l.beta = Tensor<T>({channels}, T{0});
  l.validate();
  return l;
}

template <typename T>
void NormLayer<T>::validate() const {
  if (!(epsilon > 0.0)) throw ConfigError("norm epsilon must be positive");
  if (gamma.shape() != beta.shape()) {
    throw ConfigError("norm gamma " + shape_str(gamma.shape()) + " and beta " + shape_str(beta.shape()) + " differ");
  }
  if (kind == NormKind::kBatch) {
    if (!(momentum > 0.0 && momentum < 1.0)) throw ConfigError("batch norm momentum must lie in (0,1)");
    if (running_mean.shape() != gamma.shape() || running_var.shape() != gamma.shape()) {
      throw ConfigError("batch norm running statistics must match gamma's shape");
    }
  }
  if (kind == NormKind::kGroup) {
    if (groups == 0 || gamma.size() % groups != 0) {
      throw ConfigError("group norm: channel count " + std::to_string(gamma.size()) + " is not divisible by " +
                        std::to_string(groups) + " groups");
    }
  }
}

namespace {

// Every kind is expressed as x viewed [outer, channels, inner] with a
// region per (outer, channel) pair and an affine index per channel.
struct Layout {
  std::size_t outer = 0, channels = 0, inner = 0, regions = 0;
  NormKind kind = NormKind::kBatch;
  std::size_t per_group = 1;

  std::size_t region(std::size_t n, std::size_t c) const {
    switch (kind) {
      case NormKind::kBatch:
        return c;
      case NormKind::kLayer:
        return n;
      case NormKind::kGroup:
        return n * (channels / per_group) + c / per_group;
    }
    return 0;
  }
};

template <typename T>
Layout make_layout(const Tensor<T>& x, const NormLayer<T>& layer) {
  layer.validate();
  Layout l;
  l.kind = layer.kind;
  if (x.size() == 0 || x.rank() == 0) throw ContractError("normalization of an empty tensor");
  switch (layer.kind) {
    case NormKind::kBatch:
    case NormKind::kGroup: {
      if (x.rank() < 2) throw DimensionError("batch/group norm expects [N,C,...], got " + shape_str(x.shape()));
      l.outer = x.dim(0);
      l.channels = x.dim(1);
      l.inner = x.size() / (l.outer * l.channels);
      if (layer.gamma.size() != l.channels) {
        throw DimensionError("norm gamma " + shape_str(layer.gamma.shape()) + " does not match " +
                             std::to_string(l.channels) + " channels of " + shape_str(x.shape()));
      }
      if (layer.kind == NormKind::kBatch) {
        l.regions = l.channels;
      } else {
        if (l.channels % layer.groups != 0) {
          throw ConfigError("group norm: C = " + std::to_string(l.channels) + " not divisible by G = " +
                            std::to_string(layer.groups));
        }
        l.per_group = l.channels / layer.groups;
        l.regions = l.outer * layer.groups;
      }
      break;
    }
    case NormKind::kLayer: {
      const std::size_t d = layer.gamma.size();
      const auto& gs = layer.gamma.shape();
      const auto& xs = x.shape();
      const bool trailing = xs.size() >= gs.size() && std::equal(gs.rbegin(), gs.rend(), xs.rbegin());
      if (d == 0 || !trailing) {
        throw DimensionError("layer norm gamma " + shape_str(gs) + " is not a trailing shape of " + shape_str(xs));
      }
      l.outer = x.size() / d;
      l.channels = d;
      l.inner = 1;
      l.regions = l.outer;
      break;
    }
  }
  return l;
}

}  // namespace

template <typename T>
NormResult<T> normalize(const Tensor<T>& x, NormLayer<T>& layer, Mode mode) {
  const Layout l = make_layout(x, layer);
  const bool use_running = layer.kind == NormKind::kBatch && mode == Mode::kEval;
  NormResult<T> r;
  r.output = Tensor<T>(x.shape());
  r.normalized = Tensor<T>(x.shape());
  r.used_running_stats = use_running;
  r.region_size.assign(l.regions, 0);
  std::vector<double> mean(l.regions, 0.0);
  std::vector<double> var(l.regions, 0.0);
  const auto src = x.data();

  if (use_running) {
    for (std::size_t c = 0; c < l.regions; ++c) {
      mean[c] = static_cast<double>(layer.running_mean[c]);
      var[c] = static_cast<double>(layer.running_var[c]);
    }
  } else {
    for (std::size_t n = 0; n < l.outer; ++n) {
      for (std::size_t c = 0; c < l.channels; ++c) {
        const std::size_t reg = l.region(n, c);
        const T* p = src.data() + (n * l.channels + c) * l.inner;
        double acc = 0.0;
        for (std::size_t s = 0; s < l.inner; ++s) acc += static_cast<double>(p[s]);
        mean[reg] += acc;
        r.region_size[reg] += l.inner;
      }
    }
    for (std::size_t g = 0; g < l.regions; ++g) mean[g] /= static_cast<double>(r.region_size[g]);
    for (std::size_t n = 0; n < l.outer; ++n) {
      for (std::size_t c = 0; c < l.channels; ++c) {
        const std::size_t reg = l.region(n, c);
        const T* p = src.data() + (n * l.channels + c) * l.inner;
        double acc = 0.0;
        for (std::size_t s = 0; s < l.inner; ++s) {
          const double d = static_cast<double>(p[s]) - mean[reg];
          acc += d * d;
        }
        var[reg] += acc;
      }
    }
    for (std::size_t g = 0; g < l.regions; ++g) var[g] /= static_cast<double>(r.region_size[g]);

    if (layer.kind == NormKind::kBatch) {
      if (l.outer * l.inner == 1) {
        layer.warnings.push_back("train-mode batch norm over a single value per channel; output equals beta");
      }
      const double m = layer.momentum;
      for (std::size_t c = 0; c < l.channels; ++c) {
        layer.running_mean[c] = static_cast<T>((1.0 - m) * static_cast<double>(layer.running_mean[c]) + m * mean[c]);
        layer.running_var[c] = static_cast<T>((1.0 - m) * static_cast<double>(layer.running_var[c]) + m * var[c]);
      }
    }
  }

  r.inv_std.resize(l.regions);
  for (std::size_t g = 0; g < l.regions; ++g) r.inv_std[g] = 1.0 / std::sqrt(var[g] + layer.epsilon);

  auto xhat = r.normalized.data();
  auto out = r.output.data();
  for (std::size_t n = 0; n < l.outer; ++n) {
    for (std::size_t c = 0; c < l.channels; ++c) {
      const std::size_t reg = l.region(n, c);
      const std::size_t base = (n * l.channels + c) * l.inner;
      const T g = layer.gamma[c];
      const T b = layer.beta[c];
      for (std::size_t s = 0; s < l.inner; ++s) {
        const T h = static_cast<T>((static_cast<double>(src[base + s]) - mean[reg]) * r.inv_std[reg]);
        xhat[base + s] = h;
        out[base + s] = g * h + b;
      }
    }
  }
  return r;
}

template <typename T>
NormGrads<T> normalize_backward(const Tensor<T>& x, const NormLayer<T>& layer, const NormResult<T>& saved,
                                const Tensor<T>& grad_out) {
  const Layout l = make_layout(x, layer);
  if (grad_out.shape() != x.shape()) throw DimensionError("normalize_backward gradient shape mismatch");
  NormGrads<T> g{Tensor<T>(x.shape()), Tensor<T>(layer.gamma.shape()), Tensor<T>(layer.beta.shape())};
  const auto dy = grad_out.data();
  const auto xhat = saved.normalized.data();
  auto dx = g.input.data();

  std::vector<double> sum_dxhat(l.regions, 0.0);
  std::vector<double> sum_dxhat_xhat(l.regions, 0.0);
  std::vector<double> dgamma(l.channels, 0.0);
  std::vector<double> dbeta(l.channels, 0.0);
  for (std::size_t n = 0; n < l.outer; ++n) {
    for (std::size_t c = 0; c < l.channels; ++c) {
      const std::size_t reg = l.region(n, c);
      const std::size_t base = (n * l.channels + c) * l.inner;
      const double gam = static_cast<double>(layer.gamma[c]);
      double sd = 0.0, sdx = 0.0, dg = 0.0, db = 0.0;
      for (std::size_t s = 0; s < l.inner; ++s) {
        const double d = static_cast<double>(dy[base + s]);
        const double h = static_cast<double>(xhat[base + s]);
        dg += d * h;
        db += d;
        sd += d * gam;
        sdx += d * gam * h;
      }
      dgamma[c] += dg;
      dbeta[c] += db;
      sum_dxhat[reg] += sd;
      sum_dxhat_xhat[reg] += sdx;
    }
  }
  for (std::size_t c = 0; c < l.channels; ++c) {
    g.gamma[c] = static_cast<T>(dgamma[c]);
    g.beta[c] = static_cast<T>(dbeta[c]);
  }

  for (std::size_t n = 0; n < l.outer; ++n) {
    for (std::size_t c = 0; c < l.channels; ++c) {
      const std::size_t reg = l.region(n, c);
      const std::size_t base = (n * l.channels + c) * l.inner;
      const double gam = static_cast<double>(layer.gamma[c]);
      const double inv = saved.inv_std[reg];
      if (saved.used_running_stats) {
        for (std::size_t s = 0; s < l.inner; ++s) dx[base + s] = static_cast<T>(static_cast<double>(dy[base + s]) * gam * inv);
        continue;
      }
      const double m = static_cast<double>(saved.region_size[reg]);
      const double mean_d = sum_dxhat[reg] / m;
      const double mean_dh = sum_dxhat_xhat[reg] / m;
      for (std::size_t s = 0; s < l.inner; ++s) {
        const double d = static_cast<double>(dy[base + s]) * gam;
        const double h = static_cast<double>(xhat[base + s]);
        dx[base + s] = static_cast<T>(inv * (d - mean_d - h * mean_dh));
      }
    }
  }
  return g;
}

template struct NormLayer<float>;
template struct NormLayer<double>;
template NormResult<float> normalize(const Tensor<float>&, NormLayer<float>&, Mode);
template NormResult<double> normalize(const Tensor<double>&, NormLayer<double>&, Mode);
template NormGrads<float> normalize_backward(const Tensor<float>&, const NormLayer<float>&, const NormResult<float>&,
                                             const Tensor<float>&);
template NormGrads<double> normalize_backward(const Tensor<double>&, const NormLayer<double>&,
                                              const NormResult<double>&, const Tensor<double>&);

}  // namespace actlab
