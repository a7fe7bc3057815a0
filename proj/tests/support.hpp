#pragma once

#include "milcnn/random.hpp"
#include "milcnn/tensor.hpp"

#include <Eigen/Core>

#include <cmath>
#include <random>

namespace milcnn::testing {

inline Tensor random_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(shape);
  std::uniform_real_distribution<double> u(lo, hi);
  for (Index i = 0; i < t.size(); ++i) t[i] = u(rng);
  return t;
}

inline Index uniform_index(Rng& rng, Index lo, Index hi) {
  return std::uniform_int_distribution<Index>(lo, hi)(rng);
}

// Direct seven-loop convolution; the reference every fast path is checked against.
inline Tensor brute_conv2d(const Tensor& x, const Tensor& k, const Tensor& bias, Index stride,
                           Index pad) {
  const Index n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const Index co = k.dim(0), kh = k.dim(2), kw = k.dim(3);
  const Index oh = (h + 2 * pad - kh) / stride + 1, ow = (w + 2 * pad - kw) / stride + 1;
  Tensor y({n, co, oh, ow});
  for (Index s = 0; s < n; ++s)
    for (Index o = 0; o < co; ++o)
      for (Index i = 0; i < oh; ++i)
        for (Index j = 0; j < ow; ++j) {
          double acc = bias.empty() ? 0.0 : bias[o];
          for (Index ch = 0; ch < c; ++ch)
            for (Index a = 0; a < kh; ++a)
              for (Index b = 0; b < kw; ++b) {
                const Index yy = i * stride - pad + a, xx = j * stride - pad + b;
                if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
                acc += x.at({s, ch, yy, xx}) * k.at({o, ch, a, b});
              }
          y.at({s, o, i, j}) = acc;
        }
  return y;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  return (a.data() - b.data()).cwiseAbs().maxCoeff();
}

}  // namespace milcnn::testing
