#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "actlab/activations.hpp"
#include "actlab/kernels.hpp"
#include "actlab/normalization.hpp"
#include "actlab/tensor.hpp"

namespace actlab {

/// Handle to a node recorded on a Graph.
struct Var {
  std::size_t id = 0;
  friend bool operator==(Var, Var) = default;
};

/// Gradients of a scalar loss, one per differentiable leaf.
template <typename T>
class Gradients {
 public:
  const Tensor<T>& operator[](Var leaf) const;
  bool contains(Var leaf) const { return by_leaf_.count(leaf.id) != 0; }
  std::size_t size() const { return by_leaf_.size(); }
  const std::map<std::size_t, Tensor<T>>& all() const { return by_leaf_; }

 private:
  template <typename>
  friend class Graph;
  std::map<std::size_t, Tensor<T>> by_leaf_;
};

/// Reverse-mode tape. Nodes are appended in evaluation order, so every
/// operand precedes its consumer and backward() is a single reverse sweep.
/// Every forward op checks its output for NaN/Inf and throws NonFiniteError
/// naming the op and the current scope.
template <typename T>
class Graph {
 public:
  Var leaf(Tensor<T> value, std::string label = {});
  Var constant(Tensor<T> value, std::string label = {});

  const Tensor<T>& value(Var v) const { return nodes_.at(v.id).value; }
  std::size_t size() const { return nodes_.size(); }
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }

  /// Prefix for op labels in diagnostics, e.g. "block3.conv1".
  void set_scope(std::string scope) { scope_ = std::move(scope); }

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, T factor);
  Var sum(Var a);
  Var mean(Var a);
  Var reshape(Var a, Shape shape);

  Var matmul(Var a, Var b);
  /// x [N,in], weight [out,in], bias [out] -> x weight^T + bias.
  Var linear(Var x, Var weight, std::optional<Var> bias);
  Var conv2d(Var x, Var kernel, std::optional<Var> bias, Conv2dGeometry geo);
  /// `prelu_slope` must be a one-element node when act.kind is PReLU.
  Var activation(Var x, const Activation& act, ActivationContext ctx, std::optional<Var> prelu_slope = {});
  /// Normalizes with `layer`'s kind/epsilon/groups and the affine parameters
  /// held by `gamma` and `beta`. Batch norm in train mode updates
  /// layer.running_mean / running_var.
  Var norm(Var x, Var gamma, Var beta, NormLayer<T>& layer, Mode mode);
  /// [N,C,H,W] -> [N,C]
  Var global_avg_pool(Var x);

  Var mse(Var yhat, const Tensor<T>& y);
  Var mae(Var yhat, const Tensor<T>& y);
  Var huber(Var yhat, const Tensor<T>& y, double delta);
  Var hinge(Var yhat, const Tensor<T>& y);
  Var cross_entropy(Var logits, std::span<const int> labels);
  Var triplet(Var anchor, Var positive, Var negative, double margin);

  /// Throws ContractError unless `loss` holds exactly one element.
  Gradients<T> backward(Var loss);

 private:
  using Backprop = std::function<void(Graph&, const Tensor<T>& grad)>;

  struct Node {
    Tensor<T> value;
    std::vector<std::size_t> inputs;
    Backprop backprop;
    bool requires_grad = false;
    bool is_leaf = false;
    std::string op;
  };

  Var record(Tensor<T> value, std::vector<std::size_t> inputs, std::string op, Backprop backprop);
  Var scalar_loss(Var input, T loss, Tensor<T> grad, std::string op);
  void accumulate(std::size_t id, const Tensor<T>& grad);
  void accumulate(std::size_t id, Tensor<T>&& grad);
  bool needs(std::size_t id) const { return nodes_[id].requires_grad; }

  std::vector<Node> nodes_;
  std::vector<Tensor<T>> grads_;
  std::string scope_;
};

/// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h per coordinate.
/// Throws NonFiniteError if f is not finite at a probe point.
template <typename T>
Tensor<T> finite_diff_grad(const std::function<T(const Tensor<T>&)>& f, const Tensor<T>& x, T h);

}  // namespace actlab
