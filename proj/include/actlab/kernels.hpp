#pragma once

#include <cstddef>

#include "actlab/tensor.hpp"

namespace actlab {

enum class Transpose { kNo, kYes };

/// C = op(a) * op(b) for rank-2 tensors. Throws DimensionError naming both
/// shapes when the inner dimensions disagree.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b, Transpose ta = Transpose::kNo,
                 Transpose tb = Transpose::kNo);

struct Conv2dGeometry {
  std::size_t stride = 1;
  std::size_t padding = 0;
};

/// Output spatial extent of a convolution along one axis.
std::size_t conv_out_extent(std::size_t in, std::size_t kernel, const Conv2dGeometry& geo);

/// Zero-padded cross-correlation. input [N,C,H,W], kernel [F,C,kh,kw],
/// bias [F] or empty. Lowered to im2col + GEMM over chunks of the batch.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias,
                 const Conv2dGeometry& geo);

template <typename T>
struct Conv2dGrads {
  Tensor<T> input;
  Tensor<T> kernel;
  Tensor<T> bias;
};

template <typename T>
Conv2dGrads<T> conv2d_backward(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& grad_out,
                               const Conv2dGeometry& geo, bool need_input_grad = true);

}  // namespace actlab
