#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "actlab/tensor.hpp"

namespace actlab {

enum class LossKind { kMse, kMae, kHuber, kCrossEntropy, kHinge, kTriplet };

std::string_view loss_name(LossKind kind);
LossKind parse_loss(std::string_view name);

/// Loss value plus its gradient with respect to the prediction.
template <typename T>
struct LossEval {
  T value{};
  Tensor<T> grad;
};

template <typename T>
struct TripletEval {
  T value{};
  Tensor<T> grad_anchor;
  Tensor<T> grad_positive;
  Tensor<T> grad_negative;
};

// Regression losses take equal-length y and yhat and reduce by the mean.
template <typename T>
LossEval<T> mse_eval(const Tensor<T>& y, const Tensor<T>& yhat);
template <typename T>
LossEval<T> mae_eval(const Tensor<T>& y, const Tensor<T>& yhat);
template <typename T>
LossEval<T> huber_eval(const Tensor<T>& y, const Tensor<T>& yhat, double delta);

/// Mean over rows of -log softmax(logits)[label], via log-sum-exp.
template <typename T>
LossEval<T> cross_entropy_eval(std::span<const int> labels, const Tensor<T>& logits);

/// One-hot (or any probability-vector) targets [n,K] against logits [n,K].
template <typename T>
LossEval<T> cross_entropy_eval(const Tensor<T>& targets, const Tensor<T>& logits);

/// Mean of max(0, 1 - y yhat) for labels in {-1, +1}.
template <typename T>
LossEval<T> hinge_eval(const Tensor<T>& y, const Tensor<T>& yhat);

/// max(0, |a-p| - |a-n| + margin) with Euclidean distance.
template <typename T>
TripletEval<T> triplet_eval(const Tensor<T>& anchor, const Tensor<T>& positive, const Tensor<T>& negative,
                            double margin);

template <typename T>
T mse(const Tensor<T>& y, const Tensor<T>& yhat) { return mse_eval(y, yhat).value; }
template <typename T>
T mae(const Tensor<T>& y, const Tensor<T>& yhat) { return mae_eval(y, yhat).value; }
template <typename T>
T huber(const Tensor<T>& y, const Tensor<T>& yhat, double delta) { return huber_eval(y, yhat, delta).value; }
template <typename T>
T cross_entropy(std::span<const int> labels, const Tensor<T>& logits) { return cross_entropy_eval(labels, logits).value; }
template <typename T>
T hinge(const Tensor<T>& y, const Tensor<T>& yhat) { return hinge_eval(y, yhat).value; }
template <typename T>
T triplet(const Tensor<T>& a, const Tensor<T>& p, const Tensor<T>& n, double margin) {
  return triplet_eval(a, p, n, margin).value;
}

/// The probability form -mean(sum y log p) on already-normalized probabilities.
template <typename T>
T cross_entropy_from_probs(const Tensor<T>& targets, const Tensor<T>& probs);

/// Row-wise softmax of [n,K] logits.
template <typename T>
Tensor<T> softmax(const Tensor<T>& logits);

}  // namespace actlab
