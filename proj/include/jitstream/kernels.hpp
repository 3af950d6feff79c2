#pragma once

// Layer math on (C, H, W) tensors. The functions in `jitstream` are the
// production kernels: OpenMP over channels / im2col rows, GEMM via Eigen.
// `jitstream::reference` holds plain serial loops with the same contracts;
// tests and bench_kernels compare the two.

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "jitstream/tensor.hpp"

namespace jitstream {

struct ConvGeometry {
  std::size_t stride = 1;
  std::size_t pad_h = 0;
  std::size_t pad_w = 0;

  /// "Same" padding for a kh x kw kernel.
  static ConvGeometry same(std::size_t kh, std::size_t kw, std::size_t stride = 1) {
    return {stride, kh / 2, kw / 2};
  }
};

/// floor((in + 2*pad - k) / stride) + 1, rejecting kernels larger than the padded input.
std::size_t conv_output_extent(std::size_t in, std::size_t kernel, std::size_t stride,
                               std::size_t pad);

template <typename T>
struct Conv2dGradients {
  Tensor<T> input;
  Tensor<T> weights;
  std::vector<T> bias;  // empty when the conv has no bias
};

template <typename T>
struct BatchNormCache {
  Tensor<T> normalized;  // (x - mean) * inv_std, pre-affine
  std::vector<T> inv_std;
};

template <typename T>
struct BatchNormGradients {
  Tensor<T> input;
  std::vector<T> gamma;
  std::vector<T> beta;
};

/// `bias` may be empty. Weights are (out, in, kh, kw).
template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const Tensor<T>& weights,
                         std::span<const T> bias, const ConvGeometry& geom);

template <typename T>
Conv2dGradients<T> conv2d_backward(const Tensor<T>& input, const Tensor<T>& weights,
                                   const Tensor<T>& grad_output, const ConvGeometry& geom,
                                   bool with_bias);

/// Per-channel normalization over the spatial extent of this frame.
template <typename T>
Tensor<T> batchnorm_forward(const Tensor<T>& input, std::span<const T> gamma,
                            std::span<const T> beta, T eps, BatchNormCache<T>* cache);

template <typename T>
BatchNormGradients<T> batchnorm_backward(const Tensor<T>& grad_output, std::span<const T> gamma,
                                         const BatchNormCache<T>& cache);

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& input);

/// `output` is the forward result; the gradient passes where output > 0.
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& grad_output, const Tensor<T>& output);

/// Half-pixel-center bilinear sampling with edge clamping to an arbitrary
/// output extent. An integer factor r maps H x W to (H*r) x (W*r).
template <typename T>
Tensor<T> bilinear_resize_forward(const Tensor<T>& input, std::size_t out_h, std::size_t out_w);

template <typename T>
Tensor<T> bilinear_resize_backward(const Tensor<T>& grad_output, std::size_t in_h,
                                   std::size_t in_w);

template <typename T>
Tensor<T> bilinear_resize_factor(const Tensor<T>& input, std::size_t factor) {
  if (factor < 1) throw std::invalid_argument("bilinear_resize: factor must be >= 1");
  return bilinear_resize_forward(input, input.height() * factor, input.width() * factor);
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b);

/// Inverse of concat_channels for gradients: first `a_channels` go to the first tensor.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>& grad, std::size_t a_channels);

namespace reference {

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const Tensor<T>& weights,
                         std::span<const T> bias, const ConvGeometry& geom);

template <typename T>
Conv2dGradients<T> conv2d_backward(const Tensor<T>& input, const Tensor<T>& weights,
                                   const Tensor<T>& grad_output, const ConvGeometry& geom,
                                   bool with_bias);

template <typename T>
Tensor<T> batchnorm_forward(const Tensor<T>& input, std::span<const T> gamma,
                            std::span<const T> beta, T eps);

template <typename T>
Tensor<T> bilinear_resize_forward(const Tensor<T>& input, std::size_t out_h, std::size_t out_w);

template <typename T>
Tensor<T> bilinear_resize_backward(const Tensor<T>& grad_output, std::size_t in_h,
                                   std::size_t in_w);

}  // namespace reference

/// Caps OpenMP parallelism; 0 leaves the runtime default. Results do not
/// depend on the thread count.
void set_kernel_threads(int threads);

/// Applies JITSTREAM_THREADS from the environment, if set.
void apply_thread_env();

}  // namespace jitstream
