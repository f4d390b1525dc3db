#include "edgeseg/kernels.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>

namespace edgeseg {

namespace {

void gemm(bool trans_a, bool trans_b, int m, int n, int k, const float* a,
          int lda, const float* b, int ldb, float beta, float* c, int ldc) {
  cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, m, n, k, 1.0f, a, lda, b,
              ldb, beta, c, ldc);
}

void gemm(bool trans_a, bool trans_b, int m, int n, int k, const double* a,
          int lda, const double* b, int ldb, double beta, double* c, int ldc) {
  cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, m, n, k, 1.0, a, lda, b,
              ldb, beta, c, ldc);
}

struct ConvDims {
  int c_in, c_out, kh, kw, h_in, w_in, h_out, w_out;
  std::int64_t cols;  // h_out * w_out
  std::int64_t rows;  // c_in * kh * kw
};

template <typename T>
ConvDims conv_dims(const Tensor<T>& input, const Tensor<T>& weights,
                   std::size_t bias_len, int stride_h, int stride_w, int pad_h,
                   int pad_w) {
  const Shape4& xs = input.shape();
  const Shape4& ws = weights.shape();
  if (ws.c != xs.c) {
    throw ShapeError("conv2d: weights expect " + std::to_string(ws.c) +
                     " input channels, input has " + std::to_string(xs.c));
  }
  if (bias_len != 0 && static_cast<int>(bias_len) != ws.n) {
    throw ShapeError("conv2d: bias length " + std::to_string(bias_len) +
                     " does not match " + std::to_string(ws.n) +
                     " output channels");
  }
  if (stride_h < 1 || stride_w < 1)
    throw ArgumentError("conv2d: stride must be >= 1");
  if (pad_h < 0 || pad_w < 0)
    throw ArgumentError("conv2d: padding must be >= 0");
  ConvDims d;
  d.c_in = xs.c;
  d.c_out = ws.n;
  d.kh = ws.h;
  d.kw = ws.w;
  d.h_in = xs.h;
  d.w_in = xs.w;
  d.h_out = conv_out_extent(xs.h, ws.h, stride_h, pad_h);
  d.w_out = conv_out_extent(xs.w, ws.w, stride_w, pad_w);
  if (d.h_out < 1 || d.w_out < 1) {
    throw ShapeError("conv2d: computed output extents " +
                     std::to_string(d.h_out) + "x" + std::to_string(d.w_out) +
                     " are not positive for input " + xs.str());
  }
  d.cols = static_cast<std::int64_t>(d.h_out) * d.w_out;
  d.rows = static_cast<std::int64_t>(d.c_in) * d.kh * d.kw;
  return d;
}

// Gathers one sample's receptive fields into a (c_in*kh*kw) x (h_out*w_out)
// row-major matrix, zero-filling padded positions.
template <typename T>
void im2col(const T* x, const ConvDims& d, int stride_h, int stride_w,
            int pad_h, int pad_w, T* col) {
  for (int ic = 0; ic < d.c_in; ++ic) {
    const T* plane = x + static_cast<std::int64_t>(ic) * d.h_in * d.w_in;
    for (int ky = 0; ky < d.kh; ++ky) {
      for (int kx = 0; kx < d.kw; ++kx) {
        T* row = col + ((static_cast<std::int64_t>(ic) * d.kh + ky) * d.kw +
                        kx) *
                           d.cols;
        for (int oy = 0; oy < d.h_out; ++oy) {
          int iy = oy * stride_h - pad_h + ky;
          T* out = row + static_cast<std::int64_t>(oy) * d.w_out;
          if (iy < 0 || iy >= d.h_in) {
            std::fill(out, out + d.w_out, T(0));
            continue;
          }
          const T* in_row = plane + static_cast<std::int64_t>(iy) * d.w_in;
          for (int ox = 0; ox < d.w_out; ++ox) {
            int ix = ox * stride_w - pad_w + kx;
            out[ox] = (ix >= 0 && ix < d.w_in) ? in_row[ix] : T(0);
          }
        }
      }
    }
  }
}

// Scatter-adds a column matrix back into one sample's input gradient.
template <typename T>
void col2im_add(const T* col, const ConvDims& d, int stride_h, int stride_w,
                int pad_h, int pad_w, T* dx) {
  for (int ic = 0; ic < d.c_in; ++ic) {
    T* plane = dx + static_cast<std::int64_t>(ic) * d.h_in * d.w_in;
    for (int ky = 0; ky < d.kh; ++ky) {
      for (int kx = 0; kx < d.kw; ++kx) {
        const T* row = col + ((static_cast<std::int64_t>(ic) * d.kh + ky) *
                                  d.kw +
                              kx) *
                                 d.cols;
        for (int oy = 0; oy < d.h_out; ++oy) {
          int iy = oy * stride_h - pad_h + ky;
          if (iy < 0 || iy >= d.h_in) continue;
          const T* in_row = row + static_cast<std::int64_t>(oy) * d.w_out;
          T* out_row = plane + static_cast<std::int64_t>(iy) * d.w_in;
          for (int ox = 0; ox < d.w_out; ++ox) {
            int ix = ox * stride_w - pad_w + kx;
            if (ix >= 0 && ix < d.w_in) out_row[ix] += in_row[ox];
          }
        }
      }
    }
  }
}

bool is_pointwise(const ConvDims& d, int stride_h, int stride_w, int pad_h,
                  int pad_w) {
  return d.kh == 1 && d.kw == 1 && stride_h == 1 && stride_w == 1 &&
         pad_h == 0 && pad_w == 0;
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weights,
                 std::span<const T> bias, int stride_h, int stride_w,
                 int pad_h, int pad_w) {
  ConvDims d =
      conv_dims(input, weights, bias.size(), stride_h, stride_w, pad_h, pad_w);
  const Shape4& xs = input.shape();
  Tensor<T> out(Shape4{xs.n, d.c_out, d.h_out, d.w_out});

  const T* w = weights.data();
  std::vector<T> col;
  const bool pointwise = is_pointwise(d, stride_h, stride_w, pad_h, pad_w);
  if (!pointwise) col.resize(static_cast<std::size_t>(d.rows * d.cols));

  const std::int64_t in_stride = static_cast<std::int64_t>(xs.c) * xs.h * xs.w;
  const std::int64_t out_stride =
      static_cast<std::int64_t>(d.c_out) * d.cols;
  for (int s = 0; s < xs.n; ++s) {
    const T* x = input.data() + s * in_stride;
    T* y = out.data() + s * out_stride;
    const T* rhs = pointwise ? x : col.data();
    if (!pointwise)
      im2col(x, d, stride_h, stride_w, pad_h, pad_w, col.data());
    gemm(false, false, d.c_out, static_cast<int>(d.cols),
         static_cast<int>(d.rows), w, static_cast<int>(d.rows), rhs,
         static_cast<int>(d.cols), T(0), y, static_cast<int>(d.cols));
    if (!bias.empty()) {
      for (int oc = 0; oc < d.c_out; ++oc) {
        T b = bias[oc];
        T* plane = y + static_cast<std::int64_t>(oc) * d.cols;
        for (std::int64_t i = 0; i < d.cols; ++i) plane[i] += b;
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const ConvParams<T>& p) {
  return conv2d(input, p.weights, std::span<const T>(p.bias), p.stride_h,
                p.stride_w, p.pad_h, p.pad_w);
}

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& input, const Tensor<T>& weights,
                             bool has_bias, int stride_h, int stride_w,
                             int pad_h, int pad_w, const Tensor<T>& grad_out) {
  ConvDims d = conv_dims(input, weights,
                         has_bias ? static_cast<std::size_t>(weights.shape().n)
                                  : 0,
                         stride_h, stride_w, pad_h, pad_w);
  const Shape4& xs = input.shape();
  Shape4 want{xs.n, d.c_out, d.h_out, d.w_out};
  if (!(grad_out.shape() == want)) {
    throw ShapeError("conv2d_backward: upstream gradient shape " +
                     grad_out.shape().str() + " does not match output " +
                     want.str());
  }

  ConvGrads<T> g;
  g.input = Tensor<T>(xs);
  g.weights = Tensor<T>(weights.shape());
  if (has_bias) g.bias.assign(static_cast<std::size_t>(d.c_out), T(0));

  const T* w = weights.data();
  const bool pointwise = is_pointwise(d, stride_h, stride_w, pad_h, pad_w);
  std::vector<T> col, dcol;
  if (!pointwise) {
    col.resize(static_cast<std::size_t>(d.rows * d.cols));
    dcol.resize(static_cast<std::size_t>(d.rows * d.cols));
  }

  const std::int64_t in_stride = static_cast<std::int64_t>(xs.c) * xs.h * xs.w;
  const std::int64_t out_stride =
      static_cast<std::int64_t>(d.c_out) * d.cols;
  for (int s = 0; s < xs.n; ++s) {
    const T* x = input.data() + s * in_stride;
    const T* dy = grad_out.data() + s * out_stride;
    T* dx = g.input.data() + s * in_stride;
    const T* rhs = pointwise ? x : col.data();
    if (!pointwise)
      im2col(x, d, stride_h, stride_w, pad_h, pad_w, col.data());

    // dW += dY * col^T, accumulated over the batch.
    gemm(false, true, d.c_out, static_cast<int>(d.rows),
         static_cast<int>(d.cols), dy, static_cast<int>(d.cols), rhs,
         static_cast<int>(d.cols), T(1), g.weights.data(),
         static_cast<int>(d.rows));

    // dcol = W^T * dY, then scatter back into dX.
    T* dst = pointwise ? dx : dcol.data();
    gemm(true, false, static_cast<int>(d.rows), static_cast<int>(d.cols),
         d.c_out, w, static_cast<int>(d.rows), dy, static_cast<int>(d.cols),
         pointwise ? T(1) : T(0), dst, static_cast<int>(d.cols));
    if (!pointwise)
      col2im_add(dcol.data(), d, stride_h, stride_w, pad_h, pad_w, dx);

    if (has_bias) {
      for (int oc = 0; oc < d.c_out; ++oc) {
        const T* plane = dy + static_cast<std::int64_t>(oc) * d.cols;
        T acc(0);
        for (std::int64_t i = 0; i < d.cols; ++i) acc += plane[i];
        g.bias[oc] += acc;
      }
    }
  }
  return g;
}

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& input, const ConvParams<T>& p,
                             const Tensor<T>& grad_out) {
  return conv2d_backward(input, p.weights, !p.bias.empty(), p.stride_h,
                         p.stride_w, p.pad_h, p.pad_w, grad_out);
}

template <typename T>
Tensor<T> batch_norm(const Tensor<T>& input, std::span<const T> gamma,
                     std::span<const T> beta, std::span<const T> mean,
                     std::span<const T> var, T eps) {
  const Shape4& s = input.shape();
  const std::size_t c = static_cast<std::size_t>(s.c);
  if (gamma.size() != c || beta.size() != c || mean.size() != c ||
      var.size() != c) {
    throw ShapeError("batch_norm: per-channel vectors must have length " +
                     std::to_string(s.c));
  }
  if (!(eps > T(0))) throw ArgumentError("batch_norm: eps must be > 0");
  for (T v : var)
    if (v < T(0)) throw ArgumentError("batch_norm: variance must be >= 0");

  Tensor<T> out(s);
  const std::int64_t plane = static_cast<std::int64_t>(s.h) * s.w;
  for (int n = 0; n < s.n; ++n) {
    for (int ch = 0; ch < s.c; ++ch) {
      const T scale = gamma[ch] / std::sqrt(var[ch] + eps);
      const T shift = beta[ch] - scale * mean[ch];
      const T* x = input.data() + (static_cast<std::int64_t>(n) * s.c + ch) *
                                      plane;
      T* y = out.data() + (static_cast<std::int64_t>(n) * s.c + ch) * plane;
      for (std::int64_t i = 0; i < plane; ++i) y[i] = scale * x[i] + shift;
    }
  }
  return out;
}

template <typename T>
std::pair<std::vector<T>, std::vector<T>> channel_mean_var(
    const Tensor<T>& input) {
  const Shape4& s = input.shape();
  const std::int64_t plane = static_cast<std::int64_t>(s.h) * s.w;
  const T m = static_cast<T>(static_cast<std::int64_t>(s.n) * plane);
  std::vector<T> mean(s.c, T(0)), var(s.c, T(0));
  for (int ch = 0; ch < s.c; ++ch) {
    T acc(0);
    for (int n = 0; n < s.n; ++n) {
      const T* x = input.data() + (static_cast<std::int64_t>(n) * s.c + ch) *
                                      plane;
      for (std::int64_t i = 0; i < plane; ++i) acc += x[i];
    }
    mean[ch] = acc / m;
    T acc2(0);
    for (int n = 0; n < s.n; ++n) {
      const T* x = input.data() + (static_cast<std::int64_t>(n) * s.c + ch) *
                                      plane;
      for (std::int64_t i = 0; i < plane; ++i) {
        T dxi = x[i] - mean[ch];
        acc2 += dxi * dxi;
      }
    }
    var[ch] = acc2 / m;
  }
  return {std::move(mean), std::move(var)};
}

template <typename T>
Tensor<T> batch_norm_train(const Tensor<T>& input, std::span<const T> gamma,
                           std::span<const T> beta, T eps, BnCache<T>& cache) {
  const Shape4& s = input.shape();
  const std::size_t c = static_cast<std::size_t>(s.c);
  if (gamma.size() != c || beta.size() != c) {
    throw ShapeError("batch_norm_train: per-channel vectors must have length " +
                     std::to_string(s.c));
  }
  if (!(eps > T(0))) throw ArgumentError("batch_norm_train: eps must be > 0");

  auto [mean, var] = channel_mean_var(input);
  cache.mean = std::move(mean);
  cache.var = std::move(var);
  cache.inv_std.resize(c);
  for (std::size_t ch = 0; ch < c; ++ch)
    cache.inv_std[ch] = T(1) / std::sqrt(cache.var[ch] + eps);

  cache.xhat = Tensor<T>(s);
  Tensor<T> out(s);
  const std::int64_t plane = static_cast<std::int64_t>(s.h) * s.w;
  for (int n = 0; n < s.n; ++n) {
    for (int ch = 0; ch < s.c; ++ch) {
      const std::int64_t base =
          (static_cast<std::int64_t>(n) * s.c + ch) * plane;
      const T* x = input.data() + base;
      T* xh = cache.xhat.data() + base;
      T* y = out.data() + base;
      const T mu = cache.mean[ch];
      const T is = cache.inv_std[ch];
      const T gm = gamma[ch];
      const T bt = beta[ch];
      for (std::int64_t i = 0; i < plane; ++i) {
        xh[i] = (x[i] - mu) * is;
        y[i] = gm * xh[i] + bt;
      }
    }
  }
  return out;
}

template <typename T>
BnGrads<T> batch_norm_backward(const Tensor<T>& grad_out,
                               std::span<const T> gamma,
                               const BnCache<T>& cache) {
  const Shape4& s = grad_out.shape();
  if (!(cache.xhat.shape() == s)) {
    throw ShapeError("batch_norm_backward: cache does not match gradient shape");
  }
  const std::int64_t plane = static_cast<std::int64_t>(s.h) * s.w;
  const T m = static_cast<T>(static_cast<std::int64_t>(s.n) * plane);

  BnGrads<T> g;
  g.input = Tensor<T>(s);
  g.gamma.assign(s.c, T(0));
  g.beta.assign(s.c, T(0));

  for (int ch = 0; ch < s.c; ++ch) {
    T sum_dy(0), sum_dy_xhat(0);
    for (int n = 0; n < s.n; ++n) {
      const std::int64_t base =
          (static_cast<std::int64_t>(n) * s.c + ch) * plane;
      const T* dy = grad_out.data() + base;
      const T* xh = cache.xhat.data() + base;
      for (std::int64_t i = 0; i < plane; ++i) {
        sum_dy += dy[i];
        sum_dy_xhat += dy[i] * xh[i];
      }
    }
    g.beta[ch] = sum_dy;
    g.gamma[ch] = sum_dy_xhat;

    const T gm = gamma[ch];
    const T is = cache.inv_std[ch];
    for (int n = 0; n < s.n; ++n) {
      const std::int64_t base =
          (static_cast<std::int64_t>(n) * s.c + ch) * plane;
      const T* dy = grad_out.data() + base;
      const T* xh = cache.xhat.data() + base;
      T* dx = g.input.data() + base;
      for (std::int64_t i = 0; i < plane; ++i) {
        dx[i] = gm * is / m * (m * dy[i] - sum_dy - xh[i] * sum_dy_xhat);
      }
    }
  }
  return g;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& input) {
  Tensor<T> out(input.shape());
  const T* x = input.data();
  T* y = out.data();
  const std::int64_t n = input.numel();
  for (std::int64_t i = 0; i < n; ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
  return out;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& grad_out, const Tensor<T>& output) {
  if (!(grad_out.shape() == output.shape()))
    throw ShapeError("relu_backward: shape mismatch");
  Tensor<T> g(grad_out.shape());
  const T* dy = grad_out.data();
  const T* y = output.data();
  T* dx = g.data();
  const std::int64_t n = grad_out.numel();
  for (std::int64_t i = 0; i < n; ++i) dx[i] = y[i] > T(0) ? dy[i] : T(0);
  return g;
}

namespace {

struct LerpIndex {
  int lo, hi;
  double frac;
};

// Half-pixel source mapping, clamped.
inline LerpIndex lerp_index(int dst, int scale, int extent) {
  double src = (dst + 0.5) / scale - 0.5;
  if (src < 0.0) src = 0.0;
  double limit = extent - 1;
  if (src > limit) src = limit;
  int lo = static_cast<int>(src);
  int hi = lo + 1 < extent ? lo + 1 : lo;
  return {lo, hi, src - lo};
}

}  // namespace

template <typename T>
Tensor<T> bilinear_upsample(const Tensor<T>& input, int scale) {
  if (scale < 2)
    throw ArgumentError("bilinear_upsample: scale must be >= 2, got " +
                        std::to_string(scale));
  const Shape4& s = input.shape();
  Tensor<T> out(Shape4{s.n, s.c, s.h * scale, s.w * scale});

  std::vector<LerpIndex> ys(static_cast<std::size_t>(s.h) * scale);
  std::vector<LerpIndex> xs(static_cast<std::size_t>(s.w) * scale);
  for (std::size_t i = 0; i < ys.size(); ++i)
    ys[i] = lerp_index(static_cast<int>(i), scale, s.h);
  for (std::size_t i = 0; i < xs.size(); ++i)
    xs[i] = lerp_index(static_cast<int>(i), scale, s.w);

  const std::int64_t in_plane = static_cast<std::int64_t>(s.h) * s.w;
  const std::int64_t out_plane = in_plane * scale * scale;
  const std::int64_t planes = static_cast<std::int64_t>(s.n) * s.c;
  for (std::int64_t pl = 0; pl < planes; ++pl) {
    const T* x = input.data() + pl * in_plane;
    T* y = out.data() + pl * out_plane;
    for (std::size_t oy = 0; oy < ys.size(); ++oy) {
      const LerpIndex& iy = ys[oy];
      const T* r0 = x + static_cast<std::int64_t>(iy.lo) * s.w;
      const T* r1 = x + static_cast<std::int64_t>(iy.hi) * s.w;
      T* row = y + static_cast<std::int64_t>(oy) * s.w * scale;
      for (std::size_t ox = 0; ox < xs.size(); ++ox) {
        const LerpIndex& ix = xs[ox];
        const double fy = iy.frac, fx = ix.frac;
        double v = (1.0 - fy) * ((1.0 - fx) * r0[ix.lo] + fx * r0[ix.hi]) +
                   fy * ((1.0 - fx) * r1[ix.lo] + fx * r1[ix.hi]);
        row[ox] = static_cast<T>(v);
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> bilinear_upsample_backward(const Tensor<T>& grad_out,
                                     const Shape4& input_shape, int scale) {
  if (scale < 2)
    throw ArgumentError("bilinear_upsample_backward: scale must be >= 2");
  const Shape4& s = input_shape;
  Shape4 want{s.n, s.c, s.h * scale, s.w * scale};
  if (!(grad_out.shape() == want))
    throw ShapeError("bilinear_upsample_backward: gradient shape " +
                     grad_out.shape().str() + " does not match " + want.str());

  Tensor<T> g(s);
  std::vector<LerpIndex> ys(static_cast<std::size_t>(s.h) * scale);
  std::vector<LerpIndex> xs(static_cast<std::size_t>(s.w) * scale);
  for (std::size_t i = 0; i < ys.size(); ++i)
    ys[i] = lerp_index(static_cast<int>(i), scale, s.h);
  for (std::size_t i = 0; i < xs.size(); ++i)
    xs[i] = lerp_index(static_cast<int>(i), scale, s.w);

  const std::int64_t in_plane = static_cast<std::int64_t>(s.h) * s.w;
  const std::int64_t out_plane = in_plane * scale * scale;
  const std::int64_t planes = static_cast<std::int64_t>(s.n) * s.c;
  for (std::int64_t pl = 0; pl < planes; ++pl) {
    const T* dy = grad_out.data() + pl * out_plane;
    T* dx = g.data() + pl * in_plane;
    for (std::size_t oy = 0; oy < ys.size(); ++oy) {
      const LerpIndex& iy = ys[oy];
      const T* row = dy + static_cast<std::int64_t>(oy) * s.w * scale;
      for (std::size_t ox = 0; ox < xs.size(); ++ox) {
        const LerpIndex& ix = xs[ox];
        const double fy = iy.frac, fx = ix.frac;
        const T v = row[ox];
        dx[iy.lo * s.w + ix.lo] += static_cast<T>((1.0 - fy) * (1.0 - fx) * v);
        dx[iy.lo * s.w + ix.hi] += static_cast<T>((1.0 - fy) * fx * v);
        dx[iy.hi * s.w + ix.lo] += static_cast<T>(fy * (1.0 - fx) * v);
        dx[iy.hi * s.w + ix.hi] += static_cast<T>(fy * fx * v);
      }
    }
  }
  return g;
}

template <typename T>
Tensor<T> add_elementwise(const Tensor<T>& a, const Tensor<T>& b) {
  if (!(a.shape() == b.shape())) {
    throw ShapeError("add_elementwise: shapes " + a.shape().str() + " and " +
                     b.shape().str() + " differ");
  }
  Tensor<T> out(a.shape());
  const T* pa = a.data();
  const T* pb = b.data();
  T* po = out.data();
  const std::int64_t n = a.numel();
  for (std::int64_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i];
  return out;
}

template <typename T>
LabelMap argmax_channel(const Tensor<T>& logits) {
  const Shape4& s = logits.shape();
  LabelMap out(s.n, s.h, s.w);
  const std::int64_t plane = static_cast<std::int64_t>(s.h) * s.w;
  for (int n = 0; n < s.n; ++n) {
    const T* base = logits.data() + static_cast<std::int64_t>(n) * s.c * plane;
    for (std::int64_t i = 0; i < plane; ++i) {
      int best = 0;
      T best_v = base[i];
      for (int ch = 1; ch < s.c; ++ch) {
        T v = base[static_cast<std::int64_t>(ch) * plane + i];
        if (v > best_v) {
          best_v = v;
          best = ch;
        }
      }
      out.values()[static_cast<std::size_t>(n) * plane + i] = best;
    }
  }
  return out;
}

#define EDGESEG_INSTANTIATE(T)                                                 \
  template Tensor<T> conv2d<T>(const Tensor<T>&, const ConvParams<T>&);        \
  template Tensor<T> conv2d<T>(const Tensor<T>&, const Tensor<T>&,             \
                               std::span<const T>, int, int, int, int);        \
  template ConvGrads<T> conv2d_backward<T>(const Tensor<T>&,                   \
                                           const ConvParams<T>&,               \
                                           const Tensor<T>&);                  \
  template ConvGrads<T> conv2d_backward<T>(const Tensor<T>&, const Tensor<T>&, \
                                           bool, int, int, int, int,           \
                                           const Tensor<T>&);                  \
  template Tensor<T> batch_norm<T>(const Tensor<T>&, std::span<const T>,       \
                                   std::span<const T>, std::span<const T>,     \
                                   std::span<const T>, T);                     \
  template std::pair<std::vector<T>, std::vector<T>> channel_mean_var<T>(      \
      const Tensor<T>&);                                                       \
  template Tensor<T> batch_norm_train<T>(const Tensor<T>&,                     \
                                         std::span<const T>,                   \
                                         std::span<const T>, T, BnCache<T>&);  \
  template BnGrads<T> batch_norm_backward<T>(const Tensor<T>&,                 \
                                             std::span<const T>,               \
                                             const BnCache<T>&);               \
  template Tensor<T> relu<T>(const Tensor<T>&);                                \
  template Tensor<T> relu_backward<T>(const Tensor<T>&, const Tensor<T>&);     \
  template Tensor<T> bilinear_upsample<T>(const Tensor<T>&, int);              \
  template Tensor<T> bilinear_upsample_backward<T>(const Tensor<T>&,           \
                                                   const Shape4&, int);        \
  template Tensor<T> add_elementwise<T>(const Tensor<T>&, const Tensor<T>&);   \
  template LabelMap argmax_channel<T>(const Tensor<T>&);

EDGESEG_INSTANTIATE(float)
EDGESEG_INSTANTIATE(double)
#undef EDGESEG_INSTANTIATE

}  // namespace edgeseg
