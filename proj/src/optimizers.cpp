#include "actlab/optimizers.hpp"

#include <cmath>
#include <string>

namespace actlab {

std::string_view optimizer_name(OptimizerKind kind) { return kind == OptimizerKind::kSgd ? "sgd" : "adam"; }

OptimizerKind parse_optimizer(std::string_view name) {
  if (name == "sgd") return OptimizerKind::kSgd;
  if (name == "adam") return OptimizerKind::kAdam;
  throw ConfigError("unknown optimizer '" + std::string(name) + "'; expected sgd or adam");
}

namespace {

template <typename T>
void check_aligned(const std::vector<Tensor<T>>& theta, const std::vector<Tensor<T>>& grads) {
  if (theta.size() != grads.size()) {
    throw DimensionError("optimizer: " + std::to_string(theta.size()) + " parameters but " +
                         std::to_string(grads.size()) + " gradients");
  }
  for (std::size_t i = 0; i < theta.size(); ++i) {
    if (theta[i].shape() != grads[i].shape()) {
      throw DimensionError("optimizer: parameter " + std::to_string(i) + " has shape " + shape_str(theta[i].shape()) +
                           " but gradient " + shape_str(grads[i].shape()));
    }
  }
}

}  // namespace

template <typename T>
void sgd_step(std::vector<Tensor<T>>& theta, const std::vector<Tensor<T>>& grads, const SgdConfig& config) {
  if (!(config.eta > 0.0)) throw ParameterError("sgd: eta must be positive");
  check_aligned(theta, grads);
  for (std::size_t i = 0; i < theta.size(); ++i) {
    auto p = theta[i].data();
    auto g = grads[i].data();
    for (std::size_t j = 0; j < p.size(); ++j) {
      p[j] = static_cast<T>(static_cast<double>(p[j]) - config.eta * static_cast<double>(g[j]));
    }
  }
}

void AdamState::validate() const {
  if (!(config.eta > 0.0)) throw ParameterError("adam: eta must be positive");
  if (!(config.beta1 >= 0.0 && config.beta1 < 1.0)) throw ParameterError("adam: beta1 must lie in [0,1)");
  if (!(config.beta2 >= 0.0 && config.beta2 < 1.0)) throw ParameterError("adam: beta2 must lie in [0,1)");
  if (!(config.epsilon > 0.0)) throw ParameterError("adam: epsilon must be positive");
}

template <typename T>
void adam_step(AdamState& state, std::vector<Tensor<T>>& theta, const std::vector<Tensor<T>>& grads) {
  state.validate();
  check_aligned(theta, grads);
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!grads[i].all_finite()) {
      throw NonFiniteError("adam: non-finite gradient in parameter " + std::to_string(i) + " at step " +
                           std::to_string(state.t + 1));
    }
  }
  if (state.m.empty()) {
    for (const auto& p : theta) {
      state.m.emplace_back(p.size(), 0.0);
      state.v.emplace_back(p.size(), 0.0);
    }
  }
  if (state.m.size() != theta.size()) throw DimensionError("adam: state was built for a different parameter set");

  const auto& c = state.config;
  state.t += 1;
  const double t = static_cast<double>(state.t);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < theta.size(); ++i) {
    auto p = theta[i].data();
    auto g = grads[i].data();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double gj = static_cast<double>(g[j]);
      m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * gj;
      v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * gj * gj;
      const double m_hat = m[j] / bc1;
      const double v_hat = v[j] / bc2;
      p[j] = static_cast<T>(static_cast<double>(p[j]) - c.eta * m_hat / (std::sqrt(v_hat) + c.epsilon));
    }
  }
}

template void sgd_step(std::vector<Tensor<float>>&, const std::vector<Tensor<float>>&, const SgdConfig&);
template void sgd_step(std::vector<Tensor<double>>&, const std::vector<Tensor<double>>&, const SgdConfig&);
template void adam_step(AdamState&, std::vector<Tensor<float>>&, const std::vector<Tensor<float>>&);
template void adam_step(AdamState&, std::vector<Tensor<double>>&, const std::vector<Tensor<double>>&);

}  // namespace actlab
