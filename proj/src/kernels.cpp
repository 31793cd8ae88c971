#include "actlab/kernels.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <sstream>

namespace actlab {

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMapMat = Eigen::Map<const RowMat<T>>;

// Upper bound on im2col buffer elements per chunk of samples.
constexpr std::size_t kColumnBudget = std::size_t{1} << 22;

struct ConvDims {
  std::size_t n, c, h, w, f, kh, kw, ho, wo;
  std::size_t patch() const { return c * kh * kw; }
  std::size_t pixels() const { return ho * wo; }
};

template <typename T>
ConvDims check_conv(const Tensor<T>& input, const Tensor<T>& kernel, const Conv2dGeometry& geo) {
  if (input.rank() != 4 || kernel.rank() != 4) {
    throw DimensionError("conv2d expects input [N,C,H,W] and kernel [F,C,kh,kw], got " +
                         shape_str(input.shape()) + " and " + shape_str(kernel.shape()));
  }
  if (input.dim(1) != kernel.dim(1)) {
    throw DimensionError("conv2d channel mismatch: input " + shape_str(input.shape()) + " vs kernel " +
                         shape_str(kernel.shape()));
  }
  if (geo.stride == 0) throw ParameterError("conv2d stride must be positive");
  ConvDims d{input.dim(0), input.dim(1), input.dim(2), input.dim(3), kernel.dim(0), kernel.dim(2), kernel.dim(3), 0, 0};
  if (d.kh > d.h + 2 * geo.padding || d.kw > d.w + 2 * geo.padding) {
    throw DimensionError("conv2d kernel " + shape_str(kernel.shape()) + " larger than padded input " +
                         shape_str(input.shape()));
  }
  d.ho = conv_out_extent(d.h, d.kh, geo);
  d.wo = conv_out_extent(d.w, d.kw, geo);
  return d;
}

// cols is [patch, chunk * pixels]; column block s holds sample (first + s).
template <typename T>
void im2col(const T* x, const ConvDims& d, const Conv2dGeometry& geo, std::size_t first, std::size_t count, T* cols) {
  const std::size_t row_len = count * d.pixels();
  const auto pad = static_cast<std::ptrdiff_t>(geo.padding);
  for (std::size_t c = 0; c < d.c; ++c) {
    for (std::size_t i = 0; i < d.kh; ++i) {
      for (std::size_t j = 0; j < d.kw; ++j) {
        T* row = cols + ((c * d.kh + i) * d.kw + j) * row_len;
        for (std::size_t s = 0; s < count; ++s) {
          const T* plane = x + ((first + s) * d.c + c) * d.h * d.w;
          T* out = row + s * d.pixels();
          for (std::size_t oh = 0; oh < d.ho; ++oh) {
            const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * geo.stride + i) - pad;
            if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(d.h)) {
              std::fill(out + oh * d.wo, out + (oh + 1) * d.wo, T{0});
              continue;
            }
            const T* src = plane + static_cast<std::size_t>(ih) * d.w;
            for (std::size_t ow = 0; ow < d.wo; ++ow) {
              const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * geo.stride + j) - pad;
              out[oh * d.wo + ow] = (iw < 0 || iw >= static_cast<std::ptrdiff_t>(d.w)) ? T{0} : src[iw];
            }
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* cols, const ConvDims& d, const Conv2dGeometry& geo, std::size_t first, std::size_t count, T* dx) {
  const std::size_t row_len = count * d.pixels();
  const auto pad = static_cast<std::ptrdiff_t>(geo.padding);
  for (std::size_t c = 0; c < d.c; ++c) {
    for (std::size_t i = 0; i < d.kh; ++i) {
      for (std::size_t j = 0; j < d.kw; ++j) {
        const T* row = cols + ((c * d.kh + i) * d.kw + j) * row_len;
        for (std::size_t s = 0; s < count; ++s) {
          T* plane = dx + ((first + s) * d.c + c) * d.h * d.w;
          const T* in = row + s * d.pixels();
          for (std::size_t oh = 0; oh < d.ho; ++oh) {
            const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * geo.stride + i) - pad;
            if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(d.h)) continue;
            T* dst = plane + static_cast<std::size_t>(ih) * d.w;
            for (std::size_t ow = 0; ow < d.wo; ++ow) {
              const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * geo.stride + j) - pad;
              if (iw >= 0 && iw < static_cast<std::ptrdiff_t>(d.w)) dst[iw] += in[oh * d.wo + ow];
            }
          }
        }
      }
    }
  }
}

std::size_t chunk_size(const ConvDims& d) {
  const std::size_t per_sample = std::max<std::size_t>(1, d.patch() * d.pixels());
  return std::clamp<std::size_t>(kColumnBudget / per_sample, 1, std::max<std::size_t>(d.n, 1));
}

}  // namespace

std::size_t conv_out_extent(std::size_t in, std::size_t kernel, const Conv2dGeometry& geo) {
  return (in + 2 * geo.padding - kernel) / geo.stride + 1;
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b, Transpose ta, Transpose tb) {
  if (a.rank() != 2 || b.rank() != 2) {
    throw DimensionError("matmul expects rank-2 operands, got " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  const bool at = ta == Transpose::kYes;
  const bool bt = tb == Transpose::kYes;
  const std::size_t m = at ? a.dim(1) : a.dim(0);
  const std::size_t k = at ? a.dim(0) : a.dim(1);
  const std::size_t kb = bt ? b.dim(1) : b.dim(0);
  const std::size_t n = bt ? b.dim(0) : b.dim(1);
  if (k != kb) {
    throw DimensionError("matmul shape mismatch: " + shape_str(a.shape()) + (at ? "^T" : "") + " x " +
                         shape_str(b.shape()) + (bt ? "^T" : ""));
  }
  Tensor<T> out({m, n});
  ConstMapMat<T> am(a.data().data(), a.dim(0), a.dim(1));
  ConstMapMat<T> bm(b.data().data(), b.dim(0), b.dim(1));
  MapMat<T> cm(out.data().data(), m, n);
  if (k == 0) {
    cm.setZero();
  } else if (at && bt) {
    cm.noalias() = am.transpose() * bm.transpose();
  } else if (at) {
    cm.noalias() = am.transpose() * bm;
  } else if (bt) {
    cm.noalias() = am * bm.transpose();
  } else {
    cm.noalias() = am * bm;
  }
  return out;
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias, const Conv2dGeometry& geo) {
  const ConvDims d = check_conv(input, kernel, geo);
  if (bias.size() != 0 && bias.size() != d.f) {
    throw DimensionError("conv2d bias " + shape_str(bias.shape()) + " does not match " + std::to_string(d.f) +
                         " filters");
  }
  Tensor<T> out({d.n, d.f, d.ho, d.wo});
  const std::size_t chunk = chunk_size(d);
  std::vector<T> cols(d.patch() * chunk * d.pixels());
  std::vector<T> prod(d.f * chunk * d.pixels());
  ConstMapMat<T> wm(kernel.data().data(), d.f, d.patch());
  for (std::size_t first = 0; first < d.n; first += chunk) {
    const std::size_t count = std::min(chunk, d.n - first);
    const std::size_t width = count * d.pixels();
    im2col(input.data().data(), d, geo, first, count, cols.data());
    ConstMapMat<T> cm(cols.data(), d.patch(), width);
    MapMat<T> pm(prod.data(), d.f, width);
    pm.noalias() = wm * cm;
    for (std::size_t s = 0; s < count; ++s) {
      for (std::size_t f = 0; f < d.f; ++f) {
        const T b = bias.size() ? bias[f] : T{0};
        const T* src = prod.data() + f * width + s * d.pixels();
        T* dst = out.data().data() + ((first + s) * d.f + f) * d.pixels();
        for (std::size_t p = 0; p < d.pixels(); ++p) dst[p] = src[p] + b;
      }
    }
  }
  return out;
}

template <typename T>
Conv2dGrads<T> conv2d_backward(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& grad_out,
                               const Conv2dGeometry& geo, bool need_input_grad) {
  const ConvDims d = check_conv(input, kernel, geo);
  if (grad_out.shape() != Shape{d.n, d.f, d.ho, d.wo}) {
    throw DimensionError("conv2d_backward grad shape " + shape_str(grad_out.shape()) + " does not match output");
  }
  Conv2dGrads<T> g{need_input_grad ? Tensor<T>(input.shape()) : Tensor<T>{}, Tensor<T>(kernel.shape()),
                   Tensor<T>({d.f})};
  const std::size_t chunk = chunk_size(d);
  std::vector<T> cols(d.patch() * chunk * d.pixels());
  std::vector<T> dy(d.f * chunk * d.pixels());
  ConstMapMat<T> wm(kernel.data().data(), d.f, d.patch());
  MapMat<T> dw(g.kernel.data().data(), d.f, d.patch());
  for (std::size_t first = 0; first < d.n; first += chunk) {
    const std::size_t count = std::min(chunk, d.n - first);
    const std::size_t width = count * d.pixels();
    for (std::size_t s = 0; s < count; ++s) {
      for (std::size_t f = 0; f < d.f; ++f) {
        const T* src = grad_out.data().data() + ((first + s) * d.f + f) * d.pixels();
        T* dst = dy.data() + f * width + s * d.pixels();
        T acc{0};
        for (std::size_t p = 0; p < d.pixels(); ++p) {
          dst[p] = src[p];
          acc += src[p];
        }
        g.bias[f] += acc;
      }
    }
    ConstMapMat<T> dym(dy.data(), d.f, width);
    im2col(input.data().data(), d, geo, first, count, cols.data());
    {
      ConstMapMat<T> cm(cols.data(), d.patch(), width);
      dw.noalias() += dym * cm.transpose();
    }
    if (need_input_grad) {
      MapMat<T> dcols(cols.data(), d.patch(), width);
      dcols.noalias() = wm.transpose() * dym;
      col2im(cols.data(), d, geo, first, count, g.input.data().data());
    }
  }
  return g;
}

#define ACTLAB_INSTANTIATE(T)                                                                             \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&, Transpose, Transpose);                    \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, const Conv2dGeometry&); \
  template Conv2dGrads<T> conv2d_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,           \
                                          const Conv2dGeometry&, bool);
ACTLAB_INSTANTIATE(float)
ACTLAB_INSTANTIATE(double)
#undef ACTLAB_INSTANTIATE

}  // namespace actlab
