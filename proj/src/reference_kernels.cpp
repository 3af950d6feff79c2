// Serial reference kernels. Straight loops, no im2col, no GEMM.

#include <cmath>
#include <stdexcept>

#include "jitstream/kernels.hpp"

namespace jitstream::reference {

namespace {

// Bilinear source coordinate for output index d, half-pixel centers.
void source_taps(std::size_t d, std::size_t in, std::size_t out, std::size_t& i0, std::size_t& i1,
                 double& w1) {
  double src = (static_cast<double>(d) + 0.5) * static_cast<double>(in) /
                   static_cast<double>(out) -
               0.5;
  src = std::max(src, 0.0);
  i0 = std::min(static_cast<std::size_t>(std::floor(src)), in - 1);
  i1 = std::min(i0 + 1, in - 1);
  w1 = i0 == in - 1 ? 0.0 : src - static_cast<double>(i0);
}

}  // namespace

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const Tensor<T>& weights,
                         std::span<const T> bias, const ConvGeometry& g) {
  require_rank(input.shape(), 3, "conv2d input");
  require_rank(weights.shape(), 4, "conv2d weights");
  const std::size_t ic = input.dim(0), ih = input.dim(1), iw = input.dim(2);
  const std::size_t oc = weights.dim(0), kh = weights.dim(2), kw = weights.dim(3);
  if (weights.dim(1) != ic) throw std::invalid_argument("conv2d: in_channels mismatch");
  const std::size_t oh = conv_output_extent(ih, kh, g.stride, g.pad_h);
  const std::size_t ow = conv_output_extent(iw, kw, g.stride, g.pad_w);
  Tensor<T> out({oc, oh, ow});
  for (std::size_t o = 0; o < oc; ++o) {
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x) {
        T acc = bias.empty() ? T{0} : bias[o];
        for (std::size_t c = 0; c < ic; ++c) {
          for (std::size_t ky = 0; ky < kh; ++ky) {
            const auto sy = static_cast<std::ptrdiff_t>(y * g.stride + ky) -
                            static_cast<std::ptrdiff_t>(g.pad_h);
            if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(ih)) continue;
            for (std::size_t kx = 0; kx < kw; ++kx) {
              const auto sx = static_cast<std::ptrdiff_t>(x * g.stride + kx) -
                              static_cast<std::ptrdiff_t>(g.pad_w);
              if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(iw)) continue;
              acc += weights[((o * ic + c) * kh + ky) * kw + kx] *
                     input.at(c, static_cast<std::size_t>(sy), static_cast<std::size_t>(sx));
            }
          }
        }
        out.at(o, y, x) = acc;
      }
    }
  }
  return out;
}

template <typename T>
Conv2dGradients<T> conv2d_backward(const Tensor<T>& input, const Tensor<T>& weights,
                                   const Tensor<T>& grad_output, const ConvGeometry& g,
                                   bool with_bias) {
  const std::size_t ic = input.dim(0), ih = input.dim(1), iw = input.dim(2);
  const std::size_t oc = weights.dim(0), kh = weights.dim(2), kw = weights.dim(3);
  const std::size_t oh = grad_output.dim(1), ow = grad_output.dim(2);
  Conv2dGradients<T> grads;
  grads.input = Tensor<T>(input.shape());
  grads.weights = Tensor<T>(weights.shape());
  if (with_bias) grads.bias.assign(oc, T{0});
  for (std::size_t o = 0; o < oc; ++o) {
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x) {
        const T go = grad_output.at(o, y, x);
        if (with_bias) grads.bias[o] += go;
        for (std::size_t c = 0; c < ic; ++c) {
          for (std::size_t ky = 0; ky < kh; ++ky) {
            const auto sy = static_cast<std::ptrdiff_t>(y * g.stride + ky) -
                            static_cast<std::ptrdiff_t>(g.pad_h);
            if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(ih)) continue;
            for (std::size_t kx = 0; kx < kw; ++kx) {
              const auto sx = static_cast<std::ptrdiff_t>(x * g.stride + kx) -
                              static_cast<std::ptrdiff_t>(g.pad_w);
              if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(iw)) continue;
              const std::size_t widx = ((o * ic + c) * kh + ky) * kw + kx;
              grads.weights[widx] +=
                  go * input.at(c, static_cast<std::size_t>(sy), static_cast<std::size_t>(sx));
              grads.input.at(c, static_cast<std::size_t>(sy), static_cast<std::size_t>(sx)) +=
                  go * weights[widx];
            }
          }
        }
      }
    }
  }
  return grads;
}

template <typename T>
Tensor<T> batchnorm_forward(const Tensor<T>& input, std::span<const T> gamma,
                            std::span<const T> beta, T eps) {
  const std::size_t channels = input.dim(0), h = input.dim(1), w = input.dim(2);
  if (h * w == 0) throw std::invalid_argument("batchnorm: zero spatial extent");
  Tensor<T> out(input.shape());
  for (std::size_t c = 0; c < channels; ++c) {
    T mean{0};
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) mean += input.at(c, y, x);
    mean /= static_cast<T>(h * w);
    T var{0};
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) var += (input.at(c, y, x) - mean) * (input.at(c, y, x) - mean);
    var /= static_cast<T>(h * w);
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        out.at(c, y, x) = gamma[c] * (input.at(c, y, x) - mean) / std::sqrt(var + eps) + beta[c];
  }
  return out;
}

template <typename T>
Tensor<T> bilinear_resize_forward(const Tensor<T>& input, std::size_t out_h, std::size_t out_w) {
  const std::size_t channels = input.dim(0), in_h = input.dim(1), in_w = input.dim(2);
  Tensor<T> out({channels, out_h, out_w});
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t y = 0; y < out_h; ++y) {
      std::size_t y0, y1;
      double wy;
      source_taps(y, in_h, out_h, y0, y1, wy);
      for (std::size_t x = 0; x < out_w; ++x) {
        std::size_t x0, x1;
        double wx;
        source_taps(x, in_w, out_w, x0, x1, wx);
        const double v = (1 - wy) * ((1 - wx) * input.at(c, y0, x0) + wx * input.at(c, y0, x1)) +
                         wy * ((1 - wx) * input.at(c, y1, x0) + wx * input.at(c, y1, x1));
        out.at(c, y, x) = static_cast<T>(v);
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> bilinear_resize_backward(const Tensor<T>& grad_output, std::size_t in_h,
                                   std::size_t in_w) {
  const std::size_t channels = grad_output.dim(0), out_h = grad_output.dim(1),
                    out_w = grad_output.dim(2);
  Tensor<T> out({channels, in_h, in_w});
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t y = 0; y < out_h; ++y) {
      std::size_t y0, y1;
      double wy;
      source_taps(y, in_h, out_h, y0, y1, wy);
      for (std::size_t x = 0; x < out_w; ++x) {
        std::size_t x0, x1;
        double wx;
        source_taps(x, in_w, out_w, x0, x1, wx);
        const double g = grad_output.at(c, y, x);
        out.at(c, y0, x0) += static_cast<T>((1 - wy) * (1 - wx) * g);
        out.at(c, y0, x1) += static_cast<T>((1 - wy) * wx * g);
        out.at(c, y1, x0) += static_cast<T>(wy * (1 - wx) * g);
        out.at(c, y1, x1) += static_cast<T>(wy * wx * g);
      }
    }
  }
  return out;
}

#define JITSTREAM_INSTANTIATE(T)                                                            \
  template Tensor<T> conv2d_forward(const Tensor<T>&, const Tensor<T>&, std::span<const T>,  \
                                    const ConvGeometry&);                                    \
  template Conv2dGradients<T> conv2d_backward(const Tensor<T>&, const Tensor<T>&,            \
                                              const Tensor<T>&, const ConvGeometry&, bool);  \
  template Tensor<T> batchnorm_forward(const Tensor<T>&, std::span<const T>,                \
                                       std::span<const T>, T);                              \
  template Tensor<T> bilinear_resize_forward(const Tensor<T>&, std::size_t, std::size_t);    \
  template Tensor<T> bilinear_resize_backward(const Tensor<T>&, std::size_t, std::size_t);

JITSTREAM_INSTANTIATE(float)
JITSTREAM_INSTANTIATE(double)

#undef JITSTREAM_INSTANTIATE

}  // namespace jitstream::reference
