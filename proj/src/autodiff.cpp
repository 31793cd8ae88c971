#include "actlab/autodiff.hpp"

#include <cmath>
#include <memory>

#include "actlab/losses.hpp"

namespace actlab {

template <typename T>
const Tensor<T>& Gradients<T>::operator[](Var leaf) const {
  auto it = by_leaf_.find(leaf.id);
  if (it == by_leaf_.end()) throw ContractError("no gradient recorded for node " + std::to_string(leaf.id));
  return it->second;
}

template <typename T>
Var Graph<T>::leaf(Tensor<T> value, std::string label) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  n.is_leaf = true;
  n.op = label.empty() ? "leaf" : std::move(label);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

template <typename T>
Var Graph<T>::constant(Tensor<T> value, std::string label) {
  Node n;
  n.value = std::move(value);
  n.op = label.empty() ? "constant" : std::move(label);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

template <typename T>
Var Graph<T>::record(Tensor<T> value, std::vector<std::size_t> inputs, std::string op, Backprop backprop) {
  const std::size_t id = nodes_.size();
  std::string label = scope_.empty() ? op : scope_ + "." + op;
  if (!value.all_finite()) throw NonFiniteError("non-finite value produced by " + label);
  bool rg = false;
  for (std::size_t in : inputs) {
    if (in >= id) throw InternalError("graph cycle: operand " + std::to_string(in) + " of " + label);
    rg = rg || nodes_[in].requires_grad;
  }
  Node n;
  n.value = std::move(value);
  n.inputs = std::move(inputs);
  n.requires_grad = rg;
  n.op = std::move(label);
  if (rg) n.backprop = std::move(backprop);
  nodes_.push_back(std::move(n));
  return Var{id};
}

template <typename T>
void Graph<T>::accumulate(std::size_t id, const Tensor<T>& grad) {
  if (!nodes_[id].requires_grad) return;
  auto& slot = grads_[id];
  if (slot.size() == 0 && nodes_[id].value.size() != 0) {
    slot = grad;
    return;
  }
  if (slot.size() != grad.size()) throw InternalError("gradient shape mismatch at " + nodes_[id].op);
  auto dst = slot.data();
  auto src = grad.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

template <typename T>
void Graph<T>::accumulate(std::size_t id, Tensor<T>&& grad) {
  if (!nodes_[id].requires_grad) return;
  auto& slot = grads_[id];
  if (slot.size() == 0 && nodes_[id].value.size() != 0) {
    slot = std::move(grad);
    return;
  }
  accumulate(id, static_cast<const Tensor<T>&>(grad));
}

namespace {

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

template <typename T, typename F>
Tensor<T> zip(const Tensor<T>& a, const Tensor<T>& b, F&& f) {
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i], b[i]);
  return out;
}

}  // namespace

template <typename T>
Var Graph<T>::add(Var a, Var b) {
  require_same_shape(value(a), value(b), "add");
  return record(zip(value(a), value(b), std::plus<>{}), {a.id, b.id}, "add", [a, b](Graph& g, const Tensor<T>& d) {
    g.accumulate(a.id, d);
    g.accumulate(b.id, d);
  });
}

template <typename T>
Var Graph<T>::sub(Var a, Var b) {
  require_same_shape(value(a), value(b), "sub");
  return record(zip(value(a), value(b), std::minus<>{}), {a.id, b.id}, "sub", [a, b](Graph& g, const Tensor<T>& d) {
    g.accumulate(a.id, d);
    Tensor<T> neg(d.shape());
    for (std::size_t i = 0; i < d.size(); ++i) neg[i] = -d[i];
    g.accumulate(b.id, std::move(neg));
  });
}

template <typename T>
Var Graph<T>::mul(Var a, Var b) {
  require_same_shape(value(a), value(b), "mul");
  return record(zip(value(a), value(b), std::multiplies<>{}), {a.id, b.id}, "mul",
                [a, b](Graph& g, const Tensor<T>& d) {
                  if (g.needs(a.id)) g.accumulate(a.id, zip(d, g.value(b), std::multiplies<>{}));
                  if (g.needs(b.id)) g.accumulate(b.id, zip(d, g.value(a), std::multiplies<>{}));
                });
}

template <typename T>
Var Graph<T>::scale(Var a, T factor) {
  Tensor<T> out = value(a);
  for (auto& v : out.data()) v *= factor;
  return record(std::move(out), {a.id}, "scale", [a, factor](Graph& g, const Tensor<T>& d) {
    Tensor<T> r = d;
    for (auto& v : r.data()) v *= factor;
    g.accumulate(a.id, std::move(r));
  });
}

template <typename T>
Var Graph<T>::sum(Var a) {
  double acc = 0.0;
  for (T v : value(a).data()) acc += static_cast<double>(v);
  return record(Tensor<T>::scalar(static_cast<T>(acc)), {a.id}, "sum", [a](Graph& g, const Tensor<T>& d) {
    g.accumulate(a.id, Tensor<T>(g.value(a).shape(), d.item()));
  });
}

template <typename T>
Var Graph<T>::mean(Var a) {
  const std::size_t n = value(a).size();
  if (n == 0) throw ContractError("mean of an empty tensor");
  double acc = 0.0;
  for (T v : value(a).data()) acc += static_cast<double>(v);
  return record(Tensor<T>::scalar(static_cast<T>(acc / static_cast<double>(n))), {a.id}, "mean",
                [a, n](Graph& g, const Tensor<T>& d) {
                  g.accumulate(a.id, Tensor<T>(g.value(a).shape(), static_cast<T>(d.item() / static_cast<T>(n))));
                });
}

template <typename T>
Var Graph<T>::reshape(Var a, Shape shape) {
  return record(value(a).reshaped(shape), {a.id}, "reshape", [a](Graph& g, const Tensor<T>& d) {
    g.accumulate(a.id, d.reshaped(g.value(a).shape()));
  });
}

template <typename T>
Var Graph<T>::matmul(Var a, Var b) {
  return record(actlab::matmul(value(a), value(b)), {a.id, b.id}, "matmul", [a, b](Graph& g, const Tensor<T>& d) {
    if (g.needs(a.id)) g.accumulate(a.id, actlab::matmul(d, g.value(b), Transpose::kNo, Transpose::kYes));
    if (g.needs(b.id)) g.accumulate(b.id, actlab::matmul(g.value(a), d, Transpose::kYes, Transpose::kNo));
  });
}

template <typename T>
Var Graph<T>::linear(Var x, Var weight, std::optional<Var> bias) {
  Tensor<T> out = actlab::matmul(value(x), value(weight), Transpose::kNo, Transpose::kYes);
  std::vector<std::size_t> inputs{x.id, weight.id};
  if (bias) {
    const auto& b = value(*bias);
    if (b.size() != out.dim(1)) {
      throw DimensionError("linear: bias " + shape_str(b.shape()) + " vs output " + shape_str(out.shape()));
    }
    for (std::size_t i = 0; i < out.dim(0); ++i) {
      for (std::size_t j = 0; j < out.dim(1); ++j) out[i * out.dim(1) + j] += b[j];
    }
    inputs.push_back(bias->id);
  }
  return record(std::move(out), std::move(inputs), "linear", [x, weight, bias](Graph& g, const Tensor<T>& d) {
    // dL/dW = delta^T z, dL/db = sum over the batch of delta, dL/dz = delta W
    if (g.needs(x.id)) g.accumulate(x.id, actlab::matmul(d, g.value(weight)));
    if (g.needs(weight.id)) g.accumulate(weight.id, actlab::matmul(d, g.value(x), Transpose::kYes, Transpose::kNo));
    if (bias && g.needs(bias->id)) {
      Tensor<T> db({d.dim(1)});
      for (std::size_t i = 0; i < d.dim(0); ++i) {
        for (std::size_t j = 0; j < d.dim(1); ++j) db[j] += d[i * d.dim(1) + j];
      }
      g.accumulate(bias->id, std::move(db));
    }
  });
}

template <typename T>
Var Graph<T>::conv2d(Var x, Var kernel, std::optional<Var> bias, Conv2dGeometry geo) {
  Tensor<T> out = actlab::conv2d(value(x), value(kernel), bias ? value(*bias) : Tensor<T>{}, geo);
  std::vector<std::size_t> inputs{x.id, kernel.id};
  if (bias) inputs.push_back(bias->id);
  return record(std::move(out), std::move(inputs), "conv2d", [x, kernel, bias, geo](Graph& g, const Tensor<T>& d) {
    auto grads = conv2d_backward(g.value(x), g.value(kernel), d, geo, g.needs(x.id));
    if (g.needs(x.id)) g.accumulate(x.id, std::move(grads.input));
    g.accumulate(kernel.id, std::move(grads.kernel));
    if (bias) g.accumulate(bias->id, std::move(grads.bias));
  });
}

template <typename T>
Var Graph<T>::activation(Var x, const Activation& act, ActivationContext ctx, std::optional<Var> prelu_slope) {
  std::vector<std::size_t> inputs{x.id};
  if (act.kind == ActivationKind::kPrelu) {
    if (!prelu_slope || value(*prelu_slope).size() != 1) {
      throw ContractError("prelu activation needs a one-element slope parameter");
    }
    ctx.prelu_slope = static_cast<double>(value(*prelu_slope)[0]);
    inputs.push_back(prelu_slope->id);
  }
  Tensor<T> out = apply_activation(act, value(x), ctx);
  return record(std::move(out), std::move(inputs), std::string(activation_name(act.kind)),
                [x, act, ctx, prelu_slope](Graph& g, const Tensor<T>& d) {
                  const auto& in = g.value(x);
                  if (g.needs(x.id)) {
                    Tensor<T> dx = activation_derivative(act, in, ctx);
                    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] *= d[i];
                    g.accumulate(x.id, std::move(dx));
                  }
                  if (act.kind == ActivationKind::kPrelu && g.needs(prelu_slope->id)) {
                    double acc = 0.0;
                    for (std::size_t i = 0; i < in.size(); ++i) {
                      if (!(in[i] > T{0})) acc += static_cast<double>(d[i]) * static_cast<double>(in[i]);
                    }
                    g.accumulate(prelu_slope->id, Tensor<T>(g.value(*prelu_slope).shape(), static_cast<T>(acc)));
                  }
                });
}

template <typename T>
Var Graph<T>::norm(Var x, Var gamma, Var beta, NormLayer<T>& layer, Mode mode) {
  layer.gamma = value(gamma);
  layer.beta = value(beta);
  auto saved = std::make_shared<NormResult<T>>(normalize(value(x), layer, mode));
  Tensor<T> out = saved->output;
  saved->output = Tensor<T>{};
  NormLayer<T> frozen = layer;
  frozen.warnings.clear();
  return record(std::move(out), {x.id, gamma.id, beta.id}, std::string(norm_name(layer.kind)) + "_norm",
                [x, gamma, beta, frozen = std::move(frozen), saved](Graph& g, const Tensor<T>& d) {
                  auto grads = normalize_backward(g.value(x), frozen, *saved, d);
                  g.accumulate(x.id, std::move(grads.input));
                  g.accumulate(gamma.id, std::move(grads.gamma));
                  g.accumulate(beta.id, std::move(grads.beta));
                });
}

template <typename T>
Var Graph<T>::global_avg_pool(Var x) {
  const auto& in = value(x);
  if (in.rank() != 4) throw DimensionError("global_avg_pool expects [N,C,H,W], got " + shape_str(in.shape()));
  const std::size_t n = in.dim(0), c = in.dim(1), hw = in.dim(2) * in.dim(3);
  Tensor<T> out({n, c});
  for (std::size_t i = 0; i < n * c; ++i) {
    double acc = 0.0;
    for (std::size_t s = 0; s < hw; ++s) acc += static_cast<double>(in[i * hw + s]);
    out[i] = static_cast<T>(acc / static_cast<double>(hw));
  }
  return record(std::move(out), {x.id}, "global_avg_pool", [x, hw](Graph& g, const Tensor<T>& d) {
    Tensor<T> dx(g.value(x).shape());
    const T inv = T{1} / static_cast<T>(hw);
    for (std::size_t i = 0; i < d.size(); ++i) {
      const T v = d[i] * inv;
      for (std::size_t s = 0; s < hw; ++s) dx[i * hw + s] = v;
    }
    g.accumulate(x.id, std::move(dx));
  });
}

namespace {

template <typename T>
Tensor<T> scaled(const Tensor<T>& grad, T by) {
  Tensor<T> out = grad;
  for (auto& v : out.data()) v *= by;
  return out;
}

}  // namespace

template <typename T>
Var Graph<T>::scalar_loss(Var input, T loss, Tensor<T> grad, std::string op) {
  auto saved = std::make_shared<Tensor<T>>(std::move(grad));
  return record(Tensor<T>::scalar(loss), {input.id}, std::move(op),
                [input, saved](Graph& g, const Tensor<T>& d) { g.accumulate(input.id, scaled(*saved, d.item())); });
}

template <typename T>
Var Graph<T>::mse(Var yhat, const Tensor<T>& y) {
  auto r = mse_eval(y, value(yhat));
  return scalar_loss(yhat, r.value, std::move(r.grad), "mse");
}

template <typename T>
Var Graph<T>::mae(Var yhat, const Tensor<T>& y) {
  auto r = mae_eval(y, value(yhat));
  return scalar_loss(yhat, r.value, std::move(r.grad), "mae");
}

template <typename T>
Var Graph<T>::huber(Var yhat, const Tensor<T>& y, double delta) {
  auto r = huber_eval(y, value(yhat), delta);
  return scalar_loss(yhat, r.value, std::move(r.grad), "huber");
}

template <typename T>
Var Graph<T>::hinge(Var yhat, const Tensor<T>& y) {
  auto r = hinge_eval(y, value(yhat));
  return scalar_loss(yhat, r.value, std::move(r.grad), "hinge");
}

template <typename T>
Var Graph<T>::cross_entropy(Var logits, std::span<const int> labels) {
  auto r = cross_entropy_eval(labels, value(logits));
  return scalar_loss(logits, r.value, std::move(r.grad), "cross_entropy");
}

template <typename T>
Var Graph<T>::triplet(Var anchor, Var positive, Var negative, double margin) {
  auto r = std::make_shared<TripletEval<T>>(triplet_eval(value(anchor), value(positive), value(negative), margin));
  return record(Tensor<T>::scalar(r->value), {anchor.id, positive.id, negative.id}, "triplet",
                [anchor, positive, negative, r](Graph& g, const Tensor<T>& d) {
                  g.accumulate(anchor.id, scaled(r->grad_anchor, d.item()));
                  g.accumulate(positive.id, scaled(r->grad_positive, d.item()));
                  g.accumulate(negative.id, scaled(r->grad_negative, d.item()));
                });
}

template <typename T>
Gradients<T> Graph<T>::backward(Var loss) {
  if (loss.id >= nodes_.size()) throw ContractError("backward: unknown loss node");
  if (value(loss).size() != 1) {
    throw ContractError("backward: loss must be scalar, got shape " + shape_str(value(loss).shape()));
  }
  grads_.assign(nodes_.size(), Tensor<T>{});
  Gradients<T> out;
  if (nodes_[loss.id].requires_grad) {
    grads_[loss.id] = Tensor<T>(value(loss).shape(), T{1});
    for (std::size_t id = loss.id + 1; id-- > 0;) {
      Node& n = nodes_[id];
      if (!n.requires_grad || n.is_leaf || grads_[id].size() == 0) continue;
      n.backprop(*this, grads_[id]);
      grads_[id] = Tensor<T>{};
    }
  }
  for (std::size_t id = 0; id < nodes_.size(); ++id) {
    const Node& n = nodes_[id];
    if (!n.is_leaf || !n.requires_grad) continue;
    if (grads_[id].size() == 0) {
      out.by_leaf_.emplace(id, Tensor<T>(n.value.shape()));
    } else {
      if (!grads_[id].all_finite()) throw NonFiniteError("non-finite gradient for " + n.op);
      out.by_leaf_.emplace(id, std::move(grads_[id]));
    }
  }
  grads_.clear();
  return out;
}

template <typename T>
Tensor<T> finite_diff_grad(const std::function<T(const Tensor<T>&)>& f, const Tensor<T>& x, T h) {
  if (!(h > T{0})) throw ParameterError("finite_diff_grad: step must be positive");
  Tensor<T> probe = x;
  Tensor<T> grad(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const T orig = probe[i];
    probe[i] = orig + h;
    const T fp = f(probe);
    probe[i] = orig - h;
    const T fm = f(probe);
    probe[i] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw NonFiniteError("finite_diff_grad: f not finite near coordinate " + std::to_string(i));
    }
    grad[i] = (fp - fm) / (T{2} * h);
  }
  return grad;
}

template class Gradients<float>;
template class Gradients<double>;
template class Graph<float>;
template class Graph<double>;
template Tensor<float> finite_diff_grad(const std::function<float(const Tensor<float>&)>&, const Tensor<float>&, float);
template Tensor<double> finite_diff_grad(const std::function<double(const Tensor<double>&)>&, const Tensor<double>&,
                                         double);

}  // namespace actlab
