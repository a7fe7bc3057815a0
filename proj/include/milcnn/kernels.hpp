#pragma once

// Convolution, matrix product, pooling and ReLU kernels with hand-derived
// backward passes. All functions are pure: inputs are never modified and no
// state is shared between calls.

#include "milcnn/tensor.hpp"

#include <algorithm>
#include <limits>
#include <vector>

namespace milcnn {

/// floor((in + 2*padding - window) / stride) + 1, or ShapeError when the
/// padded extent is smaller than the window.
inline Index pooled_extent(Index in, Index window, Index stride, Index padding) {
  if (window <= 0 || stride <= 0 || padding < 0) {
    throw ShapeError("window and stride must be positive, padding non-negative");
  }
  if (in + 2 * padding < window) {
    throw ShapeError("window " + std::to_string(window) + " larger than padded extent " +
                     std::to_string(in + 2 * padding));
  }
  return (in + 2 * padding - window) / stride + 1;
}

namespace detail {

struct ImageBatch {
  Index n, c, h, w;
};

inline ImageBatch image_batch(const Shape& s, const char* what) {
  if (s.size() == 3) return {1, s[0], s[1], s[2]};
  if (s.size() == 4) return {s[0], s[1], s[2], s[3]};
  throw ShapeError(std::string(what) + " expects a C x H x W or N x C x H x W tensor, got " +
                   to_string(s));
}

inline Shape image_shape(const Shape& like, Index n, Index c, Index h, Index w) {
  if (like.size() == 3) return {c, h, w};
  return {n, c, h, w};
}

// Output columns [lo, hi) whose input column ox*stride - pad + k lies inside [0, w).
inline void valid_span(Index w, Index ow, Index stride, Index pad, Index k, Index& lo, Index& hi) {
  const Index first = pad - k;  // ox*stride >= first
  lo = first <= 0 ? 0 : (first + stride - 1) / stride;
  const Index last = w - 1 + pad - k;  // ox*stride <= last
  hi = last < 0 ? 0 : std::min(ow, last / stride + 1);
  if (lo > hi) lo = hi;
}

// cols is (C*kh*kw) x (oh*ow), row-major. Only in-bounds taps are written; the
// padding entries must already be zero, which holds for a zero-initialised
// buffer reused across images of the same geometry.
template <typename S>
void im2col(const S* img, Index c, Index h, Index w, Index kh, Index kw, Index stride,
            Index pad, Index oh, Index ow, S* cols) {
  const Index plane = oh * ow;
  for (Index ch = 0; ch < c; ++ch) {
    for (Index ky = 0; ky < kh; ++ky) {
      for (Index kx = 0; kx < kw; ++kx) {
        S* row = cols + ((ch * kh + ky) * kw + kx) * plane;
        Index lo, hi;
        valid_span(w, ow, stride, pad, kx, lo, hi);
        for (Index oy = 0; oy < oh; ++oy) {
          const Index iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          S* out = row + oy * ow;
          const S* in = img + (ch * h + iy) * w;
          const Index shift = kx - pad;
          if (stride == 1) {
            for (Index ox = lo; ox < hi; ++ox) out[ox] = in[ox + shift];
          } else {
            for (Index ox = lo; ox < hi; ++ox) out[ox] = in[ox * stride + shift];
          }
        }
      }
    }
  }
}

template <typename S>
void col2im(const S* cols, Index c, Index h, Index w, Index kh, Index kw, Index stride,
            Index pad, Index oh, Index ow, S* img) {
  const Index plane = oh * ow;
  for (Index ch = 0; ch < c; ++ch) {
    for (Index ky = 0; ky < kh; ++ky) {
      for (Index kx = 0; kx < kw; ++kx) {
        const S* row = cols + ((ch * kh + ky) * kw + kx) * plane;
        Index lo, hi;
        valid_span(w, ow, stride, pad, kx, lo, hi);
        for (Index oy = 0; oy < oh; ++oy) {
          const Index iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          S* out = img + (ch * h + iy) * w;
          const S* in = row + oy * ow;
          const Index shift = kx - pad;
          for (Index ox = lo; ox < hi; ++ox) out[ox * stride + shift] += in[ox];
        }
      }
    }
  }
}

template <typename S>
using RowMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using ColMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor>;

}  // namespace detail

// ---------------------------------------------------------------------------
// Convolution

/// Cross-correlation of `input` (C_in x H x W, optionally batched) with
/// `kernels` (C_out x C_in x kH x kW). `bias` may be empty.
template <typename S>
BasicTensor<S> conv2d(const BasicTensor<S>& input, const BasicTensor<S>& kernels,
                      const BasicTensor<S>& bias, Index stride, Index padding) {
  const auto in = detail::image_batch(input.shape(), "conv2d");
  if (kernels.rank() != 4) throw ShapeError("conv2d kernels must be rank 4");
  const Index co = kernels.dim(0), kh = kernels.dim(2), kw = kernels.dim(3);
  if (kernels.dim(1) != in.c) {
    throw ShapeError("conv2d kernel expects " + std::to_string(kernels.dim(1)) +
                     " input channels, input has " + std::to_string(in.c));
  }
  if (!bias.empty() && bias.size() != co) throw ShapeError("conv2d bias length mismatch");
  const Index oh = pooled_extent(in.h, kh, stride, padding);
  const Index ow = pooled_extent(in.w, kw, stride, padding);
  const Index ckk = in.c * kh * kw, plane = oh * ow;

  BasicTensor<S> out(detail::image_shape(input.shape(), in.n, co, oh, ow));
  // Products are taken in transposed form (plane x ckk times ckk x co) so the
  // large spatial extent is the GEMM row dimension; row-major buffers are
  // reinterpreted as column-major maps without copying.
  const Eigen::Map<const detail::ColMat<S>> kt(kernels.ptr(), ckk, co);
  const bool pointwise = kh == 1 && kw == 1 && stride == 1 && padding == 0;
  std::vector<S> cols(pointwise ? 0 : static_cast<std::size_t>(ckk * plane));

  for (Index n = 0; n < in.n; ++n) {
    const S* img = input.ptr() + n * in.c * in.h * in.w;
    Eigen::Map<detail::ColMat<S>> yt(out.ptr() + n * co * plane, plane, co);
    const S* src = img;
    if (!pointwise) {
      detail::im2col(img, in.c, in.h, in.w, kh, kw, stride, padding, oh, ow, cols.data());
      src = cols.data();
    }
    yt.noalias() = Eigen::Map<const detail::ColMat<S>>(src, plane, ckk) * kt;
    if (!bias.empty()) yt.rowwise() += bias.data().transpose();
  }
  return out;
}

template <typename S>
struct ConvGradients {
  BasicTensor<S> input;
  BasicTensor<S> kernels;
  BasicTensor<S> bias;
};

/// Gradients of conv2d with respect to its input, kernels and bias given the
/// upstream gradient of the output.
template <typename S>
ConvGradients<S> conv2d_backward(const BasicTensor<S>& input, const BasicTensor<S>& kernels,
                                 const BasicTensor<S>& grad_output, Index stride, Index padding) {
  const auto in = detail::image_batch(input.shape(), "conv2d_backward");
  const Index co = kernels.dim(0), kh = kernels.dim(2), kw = kernels.dim(3);
  const Index oh = pooled_extent(in.h, kh, stride, padding);
  const Index ow = pooled_extent(in.w, kw, stride, padding);
  if (grad_output.shape() != detail::image_shape(input.shape(), in.n, co, oh, ow)) {
    throw ShapeError("conv2d_backward grad_output shape " + to_string(grad_output.shape()));
  }
  const Index ckk = in.c * kh * kw, plane = oh * ow;

  ConvGradients<S> g{BasicTensor<S>(input.shape()), BasicTensor<S>(kernels.shape()),
                     BasicTensor<S>(Shape{co})};
  Eigen::Map<detail::ColMat<S>> dkt(g.kernels.ptr(), ckk, co);
  const auto kmat = kernels.matrix(co, ckk);
  const bool pointwise = kh == 1 && kw == 1 && stride == 1 && padding == 0;
  std::vector<S> cols(pointwise ? 0 : static_cast<std::size_t>(ckk * plane));
  std::vector<S> dcols(pointwise ? 0 : static_cast<std::size_t>(ckk * plane));

  for (Index n = 0; n < in.n; ++n) {
    const S* img = input.ptr() + n * in.c * in.h * in.w;
    S* dimg = g.input.ptr() + n * in.c * in.h * in.w;
    Eigen::Map<const detail::ColMat<S>> dyt(grad_output.ptr() + n * co * plane, plane, co);
    g.bias.data() += dyt.colwise().sum().transpose();
    const S* src = img;
    if (!pointwise) {
      detail::im2col(img, in.c, in.h, in.w, kh, kw, stride, padding, oh, ow, cols.data());
      src = cols.data();
    }
    // dK^T += cols * dY^T  (ckk x plane times plane x co)
    dkt.noalias() += Eigen::Map<const detail::RowMat<S>>(src, ckk, plane) * dyt;
    // dcols^T = dY^T * K  (plane x co times co x ckk)
    S* dst = pointwise ? dimg : dcols.data();
    Eigen::Map<detail::ColMat<S>>(dst, plane, ckk).noalias() = dyt * kmat;
    if (!pointwise) {
      detail::col2im(dcols.data(), in.c, in.h, in.w, kh, kw, stride, padding, oh, ow, dimg);
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Matrix product

template <typename S>
BasicTensor<S> matmul(const BasicTensor<S>& a, const BasicTensor<S>& b) {
  if (a.rank() != 2 || b.rank() != 2) throw ShapeError("matmul expects rank-2 tensors");
  if (a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul inner dimensions differ: " + to_string(a.shape()) + " * " +
                     to_string(b.shape()));
  }
  BasicTensor<S> out(Shape{a.dim(0), b.dim(1)});
  out.matrix(a.dim(0), b.dim(1)).noalias() =
      a.matrix(a.dim(0), a.dim(1)) * b.matrix(b.dim(0), b.dim(1));
  return out;
}

// ---------------------------------------------------------------------------
// Pooling

/// Mean over each window. Windows overlapping the zero padding still divide
/// by the full window area.
template <typename S>
BasicTensor<S> avg_pool(const BasicTensor<S>& input, Index window, Index stride, Index padding) {
  const auto in = detail::image_batch(input.shape(), "avg_pool");
  const Index oh = pooled_extent(in.h, window, stride, padding);
  const Index ow = pooled_extent(in.w, window, stride, padding);
  BasicTensor<S> out(detail::image_shape(input.shape(), in.n, in.c, oh, ow));
  const S scale = S(1) / S(window * window);
  for (Index p = 0; p < in.n * in.c; ++p) {
    const S* src = input.ptr() + p * in.h * in.w;
    S* dst = out.ptr() + p * oh * ow;
    for (Index oy = 0; oy < oh; ++oy) {
      for (Index ox = 0; ox < ow; ++ox) {
        S acc(0);
        for (Index ky = 0; ky < window; ++ky) {
          const Index iy = oy * stride - padding + ky;
          if (iy < 0 || iy >= in.h) continue;
          for (Index kx = 0; kx < window; ++kx) {
            const Index ix = ox * stride - padding + kx;
            if (ix >= 0 && ix < in.w) acc += src[iy * in.w + ix];
          }
        }
        dst[oy * ow + ox] = acc * scale;
      }
    }
  }
  return out;
}

template <typename S>
BasicTensor<S> avg_pool_backward(const BasicTensor<S>& grad_output, const Shape& input_shape,
                                 Index window, Index stride, Index padding) {
  const auto in = detail::image_batch(input_shape, "avg_pool_backward");
  const Index oh = pooled_extent(in.h, window, stride, padding);
  const Index ow = pooled_extent(in.w, window, stride, padding);
  if (grad_output.shape() != detail::image_shape(input_shape, in.n, in.c, oh, ow)) {
    throw ShapeError("avg_pool_backward grad_output shape " + to_string(grad_output.shape()));
  }
  BasicTensor<S> grad(input_shape);
  const S scale = S(1) / S(window * window);
  for (Index p = 0; p < in.n * in.c; ++p) {
    const S* src = grad_output.ptr() + p * oh * ow;
    S* dst = grad.ptr() + p * in.h * in.w;
    for (Index oy = 0; oy < oh; ++oy) {
      for (Index ox = 0; ox < ow; ++ox) {
        const S g = src[oy * ow + ox] * scale;
        for (Index ky = 0; ky < window; ++ky) {
          const Index iy = oy * stride - padding + ky;
          if (iy < 0 || iy >= in.h) continue;
          for (Index kx = 0; kx < window; ++kx) {
            const Index ix = ox * stride - padding + kx;
            if (ix >= 0 && ix < in.w) dst[iy * in.w + ix] += g;
          }
        }
      }
    }
  }
  return grad;
}

namespace detail {

// Flat input offset of each window's maximum (first occurrence wins);
// padded cells never win.
template <typename S>
std::vector<Index> max_pool_argmax(const BasicTensor<S>& input, Index window, Index stride,
                                   Index padding, Index oh, Index ow) {
  const auto in = image_batch(input.shape(), "max_pool");
  std::vector<Index> arg(static_cast<std::size_t>(in.n * in.c * oh * ow));
  std::size_t k = 0;
  for (Index p = 0; p < in.n * in.c; ++p) {
    const Index base = p * in.h * in.w;
    for (Index oy = 0; oy < oh; ++oy) {
      for (Index ox = 0; ox < ow; ++ox) {
        Index best = -1;
        S best_val = -std::numeric_limits<S>::infinity();
        for (Index ky = 0; ky < window; ++ky) {
          const Index iy = oy * stride - padding + ky;
          if (iy < 0 || iy >= in.h) continue;
          for (Index kx = 0; kx < window; ++kx) {
            const Index ix = ox * stride - padding + kx;
            if (ix < 0 || ix >= in.w) continue;
            const S v = input[base + iy * in.w + ix];
            if (best < 0 || v > best_val) {
              best = base + iy * in.w + ix;
              best_val = v;
            }
          }
        }
        if (best < 0) throw ShapeError("max_pool window lies entirely in padding");
        arg[k++] = best;
      }
    }
  }
  return arg;
}

}  // namespace detail

template <typename S>
BasicTensor<S> max_pool(const BasicTensor<S>& input, Index window, Index stride, Index padding) {
  const auto in = detail::image_batch(input.shape(), "max_pool");
  const Index oh = pooled_extent(in.h, window, stride, padding);
  const Index ow = pooled_extent(in.w, window, stride, padding);
  BasicTensor<S> out(detail::image_shape(input.shape(), in.n, in.c, oh, ow));
  const auto arg = detail::max_pool_argmax(input, window, stride, padding, oh, ow);
  for (std::size_t k = 0; k < arg.size(); ++k) out[static_cast<Index>(k)] = input[arg[k]];
  return out;
}

template <typename S>
BasicTensor<S> max_pool_backward(const BasicTensor<S>& input, const BasicTensor<S>& grad_output,
                                 Index window, Index stride, Index padding) {
  const auto in = detail::image_batch(input.shape(), "max_pool_backward");
  const Index oh = pooled_extent(in.h, window, stride, padding);
  const Index ow = pooled_extent(in.w, window, stride, padding);
  if (grad_output.shape() != detail::image_shape(input.shape(), in.n, in.c, oh, ow)) {
    throw ShapeError("max_pool_backward grad_output shape " + to_string(grad_output.shape()));
  }
  BasicTensor<S> grad(input.shape());
  const auto arg = detail::max_pool_argmax(input, window, stride, padding, oh, ow);
  for (std::size_t k = 0; k < arg.size(); ++k) grad[arg[k]] += grad_output[static_cast<Index>(k)];
  return grad;
}

// ---------------------------------------------------------------------------
// ReLU

template <typename S>
BasicTensor<S> relu(const BasicTensor<S>& input) {
  return BasicTensor<S>(input.shape(), input.data().cwiseMax(S(0)));
}

template <typename S>
BasicTensor<S> relu_backward(const BasicTensor<S>& input, const BasicTensor<S>& grad_output) {
  if (input.shape() != grad_output.shape()) throw ShapeError("relu_backward shape mismatch");
  return BasicTensor<S>(input.shape(),
                        (input.data().array() > S(0)).select(grad_output.data(), S(0)));
}

}  // namespace milcnn
