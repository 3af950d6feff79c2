#include "jitstream/kernels.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <stdexcept>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace jitstream {

namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ConvShape {
  std::size_t in_c, in_h, in_w;
  std::size_t out_c, kh, kw;
  std::size_t out_h, out_w;
};

template <typename T>
ConvShape check_conv(const Tensor<T>& input, const Tensor<T>& weights, std::size_t bias_len,
                     const ConvGeometry& g) {
  require_rank(input.shape(), 3, "conv2d input");
  require_rank(weights.shape(), 4, "conv2d weights");
  if (g.stride < 1) throw std::invalid_argument("conv2d: stride must be >= 1");
  ConvShape s{};
  s.in_c = input.dim(0);
  s.in_h = input.dim(1);
  s.in_w = input.dim(2);
  s.out_c = weights.dim(0);
  s.kh = weights.dim(2);
  s.kw = weights.dim(3);
  if (weights.dim(1) != s.in_c) {
    throw std::invalid_argument("conv2d: weight in_channels (" + std::to_string(weights.dim(1)) +
                                ") does not match input channels (" + std::to_string(s.in_c) +
                                ")");
  }
  if (bias_len != 0 && bias_len != s.out_c) {
    throw std::invalid_argument("conv2d: bias length (" + std::to_string(bias_len) +
                                ") does not match out_channels (" + std::to_string(s.out_c) + ")");
  }
  s.out_h = conv_output_extent(s.in_h, s.kh, g.stride, g.pad_h);
  s.out_w = conv_output_extent(s.in_w, s.kw, g.stride, g.pad_w);
  return s;
}

// GEMMs are split into fixed-size column blocks so the summation order, and
// hence every output bit, is independent of the thread count.
constexpr Eigen::Index kGemmColumnBlock = 256;

template <typename T>
using ConstMap = Eigen::Map<const RowMatrix<T>>;

// out (m x n) = a (m x k) * b (k x n)
template <typename T>
void gemm_blocked(const ConstMap<T>& a, const ConstMap<T>& b, Eigen::Map<RowMatrix<T>>& out) {
  const Eigen::Index n = b.cols();
  const Eigen::Index blocks = (n + kGemmColumnBlock - 1) / kGemmColumnBlock;
#pragma omp parallel for schedule(static)
  for (Eigen::Index blk = 0; blk < blocks; ++blk) {
    const Eigen::Index j = blk * kGemmColumnBlock;
    const Eigen::Index len = std::min(kGemmColumnBlock, n - j);
    out.middleCols(j, len).noalias() = a * b.middleCols(j, len);
  }
}

// out (m x k) = a (m x n) * b (k x n)^T, reducing block partials in block order.
template <typename T>
void gemm_bt_blocked(const ConstMap<T>& a, const ConstMap<T>& b, Eigen::Map<RowMatrix<T>>& out) {
  const Eigen::Index n = a.cols();
  const Eigen::Index blocks = (n + kGemmColumnBlock - 1) / kGemmColumnBlock;
  std::vector<RowMatrix<T>> partial(static_cast<std::size_t>(blocks));
#pragma omp parallel for schedule(static)
  for (Eigen::Index blk = 0; blk < blocks; ++blk) {
    const Eigen::Index j = blk * kGemmColumnBlock;
    const Eigen::Index len = std::min(kGemmColumnBlock, n - j);
    partial[static_cast<std::size_t>(blk)].noalias() =
        a.middleCols(j, len) * b.middleCols(j, len).transpose();
  }
  out.setZero();
  for (const auto& p : partial) out += p;
}

bool is_pointwise(const ConvShape& s, const ConvGeometry& g) {
  return s.kh == 1 && s.kw == 1 && g.stride == 1 && g.pad_h == 0 && g.pad_w == 0;
}

// cols: (in_c * kh * kw) x (out_h * out_w)
template <typename T>
void im2col(const Tensor<T>& input, const ConvShape& s, const ConvGeometry& g, T* cols) {
  const std::ptrdiff_t rows = static_cast<std::ptrdiff_t>(s.in_c * s.kh * s.kw);
  const std::size_t n = s.out_h * s.out_w;
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t r = 0; r < rows; ++r) {
    const std::size_t c = static_cast<std::size_t>(r) / (s.kh * s.kw);
    const std::size_t ky = (static_cast<std::size_t>(r) / s.kw) % s.kh;
    const std::size_t kx = static_cast<std::size_t>(r) % s.kw;
    const T* src = input.plane(c);
    T* dst = cols + static_cast<std::size_t>(r) * n;
    for (std::size_t oy = 0; oy < s.out_h; ++oy) {
      const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                                static_cast<std::ptrdiff_t>(g.pad_h);
      T* row = dst + oy * s.out_w;
      if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(s.in_h)) {
        std::fill(row, row + s.out_w, T{0});
        continue;
      }
      const T* src_row = src + static_cast<std::size_t>(iy) * s.in_w;
      for (std::size_t ox = 0; ox < s.out_w; ++ox) {
        const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                                  static_cast<std::ptrdiff_t>(g.pad_w);
        row[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(s.in_w))
                      ? T{0}
                      : src_row[static_cast<std::size_t>(ix)];
      }
    }
  }
}

// Accumulates cols back into the input gradient. One thread per input
// channel, so writes never overlap.
template <typename T>
void col2im(const T* cols, const ConvShape& s, const ConvGeometry& g, Tensor<T>& grad_input) {
  const std::size_t n = s.out_h * s.out_w;
  const std::ptrdiff_t channels = static_cast<std::ptrdiff_t>(s.in_c);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ci = 0; ci < channels; ++ci) {
    const std::size_t c = static_cast<std::size_t>(ci);
    T* dst = grad_input.plane(c);
    for (std::size_t ky = 0; ky < s.kh; ++ky) {
      for (std::size_t kx = 0; kx < s.kw; ++kx) {
        const T* src = cols + ((c * s.kh + ky) * s.kw + kx) * n;
        for (std::size_t oy = 0; oy < s.out_h; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                                    static_cast<std::ptrdiff_t>(g.pad_h);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(s.in_h)) continue;
          T* dst_row = dst + static_cast<std::size_t>(iy) * s.in_w;
          const T* src_row = src + oy * s.out_w;
          for (std::size_t ox = 0; ox < s.out_w; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                                      static_cast<std::ptrdiff_t>(g.pad_w);
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(s.in_w)) {
              dst_row[static_cast<std::size_t>(ix)] += src_row[ox];
            }
          }
        }
      }
    }
  }
}

struct ResizeTap {
  std::size_t i0, i1;
  double w1;  // weight of i1; i0 gets 1 - w1
};

std::vector<ResizeTap> resize_taps(std::size_t in, std::size_t out) {
  std::vector<ResizeTap> taps(out);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t d = 0; d < out; ++d) {
    double src = (static_cast<double>(d) + 0.5) * scale - 0.5;
    if (src < 0.0) src = 0.0;
    auto i0 = static_cast<std::size_t>(std::floor(src));
    if (i0 >= in - 1) {
      taps[d] = {in - 1, in - 1, 0.0};
      continue;
    }
    taps[d] = {i0, i0 + 1, src - static_cast<double>(i0)};
  }
  return taps;
}

void check_resize(std::size_t in_h, std::size_t in_w, std::size_t out_h, std::size_t out_w) {
  if (in_h == 0 || in_w == 0 || out_h == 0 || out_w == 0) {
    throw std::invalid_argument("bilinear_resize: zero spatial extent");
  }
}

}  // namespace

std::size_t conv_output_extent(std::size_t in, std::size_t kernel, std::size_t stride,
                               std::size_t pad) {
  if (stride < 1) throw std::invalid_argument("conv2d: stride must be >= 1");
  if (in + 2 * pad < kernel) {
    throw std::invalid_argument("conv2d: kernel extent " + std::to_string(kernel) +
                                " exceeds padded input extent " + std::to_string(in + 2 * pad));
  }
  return (in + 2 * pad - kernel) / stride + 1;
}

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const Tensor<T>& weights,
                         std::span<const T> bias, const ConvGeometry& geom) {
  const ConvShape s = check_conv(input, weights, bias.size(), geom);
  const std::size_t k = s.in_c * s.kh * s.kw;
  const std::size_t n = s.out_h * s.out_w;
  Tensor<T> out({s.out_c, s.out_h, s.out_w});

  std::vector<T> cols;
  const T* cols_ptr = input.data();
  if (!is_pointwise(s, geom)) {
    cols.resize(k * n);
    im2col(input, s, geom, cols.data());
    cols_ptr = cols.data();
  }
  ConstMap<T> w(weights.data(), static_cast<Eigen::Index>(s.out_c),
                static_cast<Eigen::Index>(k));
  ConstMap<T> c(cols_ptr, static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(n));
  Eigen::Map<RowMatrix<T>> o(out.data(), static_cast<Eigen::Index>(s.out_c),
                             static_cast<Eigen::Index>(n));
  gemm_blocked<T>(w, c, o);
  if (!bias.empty()) {
    for (std::size_t oc = 0; oc < s.out_c; ++oc) {
      T* p = out.plane(oc);
      const T b = bias[oc];
      for (std::size_t i = 0; i < n; ++i) p[i] += b;
    }
  }
  return out;
}

template <typename T>
Conv2dGradients<T> conv2d_backward(const Tensor<T>& input, const Tensor<T>& weights,
                                   const Tensor<T>& grad_output, const ConvGeometry& geom,
                                   bool with_bias) {
  const ConvShape s = check_conv(input, weights, 0, geom);
  if (grad_output.shape() != Shape{s.out_c, s.out_h, s.out_w}) {
    throw std::invalid_argument("conv2d backward: grad_output shape " +
                                shape_string(grad_output.shape()) + " does not match output " +
                                shape_string({s.out_c, s.out_h, s.out_w}));
  }
  const std::size_t k = s.in_c * s.kh * s.kw;
  const std::size_t n = s.out_h * s.out_w;
  const bool pointwise = is_pointwise(s, geom);

  std::vector<T> cols;
  const T* cols_ptr = input.data();
  if (!pointwise) {
    cols.resize(k * n);
    im2col(input, s, geom, cols.data());
    cols_ptr = cols.data();
  }

  Conv2dGradients<T> g;
  g.weights = Tensor<T>(weights.shape());
  g.input = Tensor<T>(input.shape());

  ConstMap<T> go(grad_output.data(), static_cast<Eigen::Index>(s.out_c),
                 static_cast<Eigen::Index>(n));
  ConstMap<T> c(cols_ptr, static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(n));
  Eigen::Map<RowMatrix<T>> gw(g.weights.data(), static_cast<Eigen::Index>(s.out_c),
                              static_cast<Eigen::Index>(k));
  gemm_bt_blocked<T>(go, c, gw);

  // w^T as a row-major (k x out_c) matrix.
  const RowMatrix<T> wt = ConstMap<T>(weights.data(), static_cast<Eigen::Index>(s.out_c),
                                      static_cast<Eigen::Index>(k))
                              .transpose();
  const ConstMap<T> wt_map(wt.data(), wt.rows(), wt.cols());
  if (pointwise) {
    Eigen::Map<RowMatrix<T>> gi(g.input.data(), static_cast<Eigen::Index>(k),
                                static_cast<Eigen::Index>(n));
    gemm_blocked<T>(wt_map, go, gi);
  } else {
    std::vector<T> gcols(k * n);
    Eigen::Map<RowMatrix<T>> gc(gcols.data(), static_cast<Eigen::Index>(k),
                                static_cast<Eigen::Index>(n));
    gemm_blocked<T>(wt_map, go, gc);
    col2im(gcols.data(), s, geom, g.input);
  }

  if (with_bias) {
    g.bias.assign(s.out_c, T{0});
    for (std::size_t oc = 0; oc < s.out_c; ++oc) {
      const T* p = grad_output.plane(oc);
      T acc{0};
      for (std::size_t i = 0; i < n; ++i) acc += p[i];
      g.bias[oc] = acc;
    }
  }
  return g;
}

template <typename T>
Tensor<T> batchnorm_forward(const Tensor<T>& input, std::span<const T> gamma,
                            std::span<const T> beta, T eps, BatchNormCache<T>* cache) {
  require_rank(input.shape(), 3, "batchnorm input");
  const std::size_t channels = input.dim(0);
  const std::size_t n = input.dim(1) * input.dim(2);
  if (n == 0) throw std::invalid_argument("batchnorm: zero spatial extent");
  if (gamma.size() != channels || beta.size() != channels) {
    throw std::invalid_argument("batchnorm: gamma/beta length does not match channels (" +
                                std::to_string(channels) + ")");
  }
  if (!(eps > T{0})) throw std::invalid_argument("batchnorm: eps must be > 0");

  Tensor<T> out(input.shape());
  Tensor<T> normalized(input.shape());
  std::vector<T> inv_std(channels);
  const std::ptrdiff_t ch = static_cast<std::ptrdiff_t>(channels);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ci = 0; ci < ch; ++ci) {
    const auto c = static_cast<std::size_t>(ci);
    const T* x = input.plane(c);
    T mean{0};
    for (std::size_t i = 0; i < n; ++i) mean += x[i];
    mean /= static_cast<T>(n);
    T var{0};
    for (std::size_t i = 0; i < n; ++i) var += (x[i] - mean) * (x[i] - mean);
    var /= static_cast<T>(n);
    const T istd = T{1} / std::sqrt(var + eps);
    inv_std[c] = istd;
    T* xn = normalized.plane(c);
    T* y = out.plane(c);
    for (std::size_t i = 0; i < n; ++i) {
      xn[i] = (x[i] - mean) * istd;
      y[i] = gamma[c] * xn[i] + beta[c];
    }
  }
  if (cache) {
    cache->normalized = std::move(normalized);
    cache->inv_std = std::move(inv_std);
  }
  return out;
}

template <typename T>
BatchNormGradients<T> batchnorm_backward(const Tensor<T>& grad_output, std::span<const T> gamma,
                                         const BatchNormCache<T>& cache) {
  if (grad_output.shape() != cache.normalized.shape()) {
    throw std::invalid_argument("batchnorm backward: grad_output shape mismatch");
  }
  const std::size_t channels = grad_output.dim(0);
  const std::size_t n = grad_output.dim(1) * grad_output.dim(2);
  BatchNormGradients<T> g;
  g.input = Tensor<T>(grad_output.shape());
  g.gamma.assign(channels, T{0});
  g.beta.assign(channels, T{0});
  const std::ptrdiff_t ch = static_cast<std::ptrdiff_t>(channels);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ci = 0; ci < ch; ++ci) {
    const auto c = static_cast<std::size_t>(ci);
    const T* dy = grad_output.plane(c);
    const T* xn = cache.normalized.plane(c);
    T sum_dy{0};
    T sum_dy_xn{0};
    for (std::size_t i = 0; i < n; ++i) {
      sum_dy += dy[i];
      sum_dy_xn += dy[i] * xn[i];
    }
    g.beta[c] = sum_dy;
    g.gamma[c] = sum_dy_xn;
    const T scale = gamma[c] * cache.inv_std[c] / static_cast<T>(n);
    T* dx = g.input.plane(c);
    for (std::size_t i = 0; i < n; ++i) {
      dx[i] = scale * (static_cast<T>(n) * dy[i] - sum_dy - xn[i] * sum_dy_xn);
    }
  }
  return g;
}

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& input) {
  Tensor<T> out(input.shape());
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(input.size());
  const T* x = input.data();
  T* y = out.data();
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) y[i] = x[i] > T{0} ? x[i] : T{0};
  return out;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& grad_output, const Tensor<T>& output) {
  if (grad_output.shape() != output.shape()) {
    throw std::invalid_argument("relu backward: shape mismatch");
  }
  Tensor<T> out(output.shape());
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(output.size());
  const T* g = grad_output.data();
  const T* y = output.data();
  T* d = out.data();
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) d[i] = y[i] > T{0} ? g[i] : T{0};
  return out;
}

template <typename T>
Tensor<T> bilinear_resize_forward(const Tensor<T>& input, std::size_t out_h, std::size_t out_w) {
  require_rank(input.shape(), 3, "bilinear_resize input");
  const std::size_t in_h = input.dim(1), in_w = input.dim(2);
  check_resize(in_h, in_w, out_h, out_w);
  if (in_h == out_h && in_w == out_w) return input;
  const auto ty = resize_taps(in_h, out_h);
  const auto tx = resize_taps(in_w, out_w);
  Tensor<T> out({input.dim(0), out_h, out_w});
  const std::ptrdiff_t ch = static_cast<std::ptrdiff_t>(input.dim(0));
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ci = 0; ci < ch; ++ci) {
    const auto c = static_cast<std::size_t>(ci);
    const T* src = input.plane(c);
    T* dst = out.plane(c);
    for (std::size_t y = 0; y < out_h; ++y) {
      const T wy1 = static_cast<T>(ty[y].w1);
      const T wy0 = T{1} - wy1;
      const T* r0 = src + ty[y].i0 * in_w;
      const T* r1 = src + ty[y].i1 * in_w;
      for (std::size_t x = 0; x < out_w; ++x) {
        const T wx1 = static_cast<T>(tx[x].w1);
        const T wx0 = T{1} - wx1;
        dst[y * out_w + x] = wy0 * (wx0 * r0[tx[x].i0] + wx1 * r0[tx[x].i1]) +
                             wy1 * (wx0 * r1[tx[x].i0] + wx1 * r1[tx[x].i1]);
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> bilinear_resize_backward(const Tensor<T>& grad_output, std::size_t in_h,
                                   std::size_t in_w) {
  require_rank(grad_output.shape(), 3, "bilinear_resize grad");
  const std::size_t out_h = grad_output.dim(1), out_w = grad_output.dim(2);
  check_resize(in_h, in_w, out_h, out_w);
  if (in_h == out_h && in_w == out_w) return grad_output;
  const auto ty = resize_taps(in_h, out_h);
  const auto tx = resize_taps(in_w, out_w);
  Tensor<T> out({grad_output.dim(0), in_h, in_w});
  const std::ptrdiff_t ch = static_cast<std::ptrdiff_t>(grad_output.dim(0));
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ci = 0; ci < ch; ++ci) {
    const auto c = static_cast<std::size_t>(ci);
    const T* src = grad_output.plane(c);
    T* dst = out.plane(c);
    for (std::size_t y = 0; y < out_h; ++y) {
      const T wy1 = static_cast<T>(ty[y].w1);
      const T wy0 = T{1} - wy1;
      T* r0 = dst + ty[y].i0 * in_w;
      T* r1 = dst + ty[y].i1 * in_w;
      for (std::size_t x = 0; x < out_w; ++x) {
        const T g = src[y * out_w + x];
        const T wx1 = static_cast<T>(tx[x].w1);
        const T wx0 = T{1} - wx1;
        r0[tx[x].i0] += wy0 * wx0 * g;
        r0[tx[x].i1] += wy0 * wx1 * g;
        r1[tx[x].i0] += wy1 * wx0 * g;
        r1[tx[x].i1] += wy1 * wx1 * g;
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank(a.shape(), 3, "concat input");
  require_rank(b.shape(), 3, "concat input");
  if (a.dim(1) != b.dim(1) || a.dim(2) != b.dim(2)) {
    throw std::invalid_argument("concat: spatial extents differ " + shape_string(a.shape()) +
                                " vs " + shape_string(b.shape()));
  }
  Tensor<T> out({a.dim(0) + b.dim(0), a.dim(1), a.dim(2)});
  std::copy(a.values().begin(), a.values().end(), out.data());
  std::copy(b.values().begin(), b.values().end(), out.data() + a.size());
  return out;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>& grad, std::size_t a_channels) {
  require_rank(grad.shape(), 3, "split input");
  if (a_channels > grad.dim(0)) throw std::invalid_argument("split: too many channels");
  const std::size_t plane = grad.dim(1) * grad.dim(2);
  Tensor<T> a({a_channels, grad.dim(1), grad.dim(2)});
  Tensor<T> b({grad.dim(0) - a_channels, grad.dim(1), grad.dim(2)});
  std::copy(grad.data(), grad.data() + a_channels * plane, a.data());
  std::copy(grad.data() + a_channels * plane, grad.data() + grad.size(), b.data());
  return {std::move(a), std::move(b)};
}

void set_kernel_threads(int threads) {
  if (threads <= 0) return;
#ifdef _OPENMP
  omp_set_num_threads(threads);
#endif
}

void apply_thread_env() {
  if (const char* env = std::getenv("JITSTREAM_THREADS")) {
    set_kernel_threads(std::atoi(env));
  }
}

#define JITSTREAM_INSTANTIATE(T)                                                              \
  template Tensor<T> conv2d_forward(const Tensor<T>&, const Tensor<T>&, std::span<const T>,    \
                                    const ConvGeometry&);                                      \
  template Conv2dGradients<T> conv2d_backward(const Tensor<T>&, const Tensor<T>&,              \
                                              const Tensor<T>&, const ConvGeometry&, bool);    \
  template Tensor<T> batchnorm_forward(const Tensor<T>&, std::span<const T>,                  \
                                       std::span<const T>, T, BatchNormCache<T>*);            \
  template BatchNormGradients<T> batchnorm_backward(const Tensor<T>&, std::span<const T>,     \
                                                    const BatchNormCache<T>&);                \
  template Tensor<T> relu_forward(const Tensor<T>&);                                           \
  template Tensor<T> relu_backward(const Tensor<T>&, const Tensor<T>&);                        \
  template Tensor<T> bilinear_resize_forward(const Tensor<T>&, std::size_t, std::size_t);      \
  template Tensor<T> bilinear_resize_backward(const Tensor<T>&, std::size_t, std::size_t);     \
  template Tensor<T> concat_channels(const Tensor<T>&, const Tensor<T>&);                      \
  template std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>&, std::size_t);

JITSTREAM_INSTANTIATE(float)
JITSTREAM_INSTANTIATE(double)

#undef JITSTREAM_INSTANTIATE

}  // namespace jitstream
