#pragma once

#include <span>
#include <utility>
#include <vector>

#include "edgeseg/tensor.hpp"

namespace edgeseg {

/// Parameters of a 2-D convolution. Weights are ordered out-channel,
/// in-channel, kernel-h, kernel-w; padding is zero-fill.
template <typename T>
struct ConvParams {
  Tensor<T> weights;     // (c_out, c_in, kh, kw)
  std::vector<T> bias;   // empty = no bias, else length c_out
  int stride_h = 1;
  int stride_w = 1;
  int pad_h = 0;
  int pad_w = 0;
};

/// Output spatial extent: floor((in + 2*pad - k) / stride) + 1.
inline int conv_out_extent(int in, int k, int stride, int pad) {
  return (in + 2 * pad - k) / stride + 1;
}

/// Direct 2-D convolution (cross-correlation, as is conventional). Internally
/// lowered to im2col + GEMM; the result equals the direct summation within
/// rounding.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const ConvParams<T>& p);

/// Non-owning variant used by the graph runtime.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weights,
                 std::span<const T> bias, int stride_h, int stride_w,
                 int pad_h, int pad_w);

template <typename T>
struct ConvGrads {
  Tensor<T> input;         // dL/dX
  Tensor<T> weights;       // dL/dW
  std::vector<T> bias;     // dL/db, empty when the layer has no bias
};

/// Reverse-mode rule for conv2d: given dL/dY, returns gradients with respect
/// to the input, the weights, and the bias.
template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& input, const ConvParams<T>& p,
                             const Tensor<T>& grad_out);

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& input, const Tensor<T>& weights,
                             bool has_bias, int stride_h, int stride_w,
                             int pad_h, int pad_w, const Tensor<T>& grad_out);

/// Per-channel affine normalization with the given statistics:
/// y = gamma * (x - mean) / sqrt(var + eps) + beta. Shape is unchanged.
template <typename T>
Tensor<T> batch_norm(const Tensor<T>& input, std::span<const T> gamma,
                     std::span<const T> beta, std::span<const T> mean,
                     std::span<const T> var, T eps);

/// Per-channel mean and biased variance over the n, h, w axes.
template <typename T>
std::pair<std::vector<T>, std::vector<T>> channel_mean_var(
    const Tensor<T>& input);

/// What batch_norm_train saves for the backward pass and the running-stat
/// update.
template <typename T>
struct BnCache {
  std::vector<T> mean;
  std::vector<T> var;  // biased batch variance
  std::vector<T> inv_std;
  Tensor<T> xhat;
};

/// Batch-statistics normalization used during training. Fills `cache` for
/// batch_norm_backward.
template <typename T>
Tensor<T> batch_norm_train(const Tensor<T>& input, std::span<const T> gamma,
                           std::span<const T> beta, T eps, BnCache<T>& cache);

template <typename T>
struct BnGrads {
  Tensor<T> input;
  std::vector<T> gamma;
  std::vector<T> beta;
};

/// Reverse-mode rule for batch-statistics normalization.
template <typename T>
BnGrads<T> batch_norm_backward(const Tensor<T>& grad_out,
                               std::span<const T> gamma,
                               const BnCache<T>& cache);

/// Elementwise max(x, 0).
template <typename T>
Tensor<T> relu(const Tensor<T>& input);

/// Reverse-mode rule for relu, masking on the forward output.
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& grad_out, const Tensor<T>& output);

/// Separable bilinear upsampling by an integer factor >= 2 with half-pixel
/// source mapping: src = (dst + 0.5) / scale - 0.5, clamped to [0, extent-1].
template <typename T>
Tensor<T> bilinear_upsample(const Tensor<T>& input, int scale);

/// Transpose of bilinear_upsample: scatters each output-gradient element onto
/// the (up to four) source pixels it interpolated from.
template <typename T>
Tensor<T> bilinear_upsample_backward(const Tensor<T>& grad_out,
                                     const Shape4& input_shape, int scale);

/// Elementwise sum of two identically shaped tensors.
template <typename T>
Tensor<T> add_elementwise(const Tensor<T>& a, const Tensor<T>& b);

/// Per-pixel argmax over the channel axis; ties break toward the lower index.
template <typename T>
LabelMap argmax_channel(const Tensor<T>& logits);

}  // namespace edgeseg
