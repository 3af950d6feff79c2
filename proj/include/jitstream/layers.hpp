#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "jitstream/kernels.hpp"
#include "jitstream/optim.hpp"

namespace jitstream {

enum class LayerKind { Conv2d, SeparableConv, BatchNorm, ReLU, BilinearResize, Concat };

std::string_view layer_kind_name(LayerKind kind);

/// Declarative description of one layer; enough to build it and to cost it.
struct LayerSpec {
  LayerKind kind = LayerKind::Conv2d;
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t kernel_h = 3;
  std::size_t kernel_w = 3;
  std::size_t stride = 1;
  std::size_t resize = 1;
  bool bias = true;
  /// Concat only: channels taken by the first operand.
  std::size_t split = 0;

  void validate() const;
};

inline constexpr double kBatchNormEps = 1e-5;

template <typename T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(const std::string& name, std::size_t in_channels, std::size_t out_channels,
         std::size_t kernel_h, std::size_t kernel_w, std::size_t stride, bool with_bias)
      : weight_(name + ".weight", Tensor<T>({out_channels, in_channels, kernel_h, kernel_w})),
        geom_(ConvGeometry::same(kernel_h, kernel_w, stride)) {
    if (with_bias) bias_.emplace(name + ".bias", Tensor<T>({out_channels}));
  }

  /// He-normal weights, zero bias.
  void initialize(std::mt19937_64& rng) {
    const double fan_in = static_cast<double>(in_channels() * kernel_h() * kernel_w());
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
    for (auto& v : weight_.value.storage()) v = static_cast<T>(dist(rng));
    if (bias_) bias_->value.fill(T{0});
  }

  Tensor<T> forward(const Tensor<T>& input) {
    input_ = input;
    return conv2d_forward<T>(input, weight_.value, bias_values(), geom_);
  }

  Tensor<T> backward(const Tensor<T>& grad_output) {
    auto g = conv2d_backward<T>(input_, weight_.value, grad_output, geom_, bias_.has_value());
    weight_.accumulate(g.weights.values());
    if (bias_) bias_->accumulate(g.bias);
    return std::move(g.input);
  }

  void collect(std::vector<ParamState<T>*>& out) {
    out.push_back(&weight_);
    if (bias_) out.push_back(&*bias_);
  }

  std::size_t param_count() const { return weight_.value.size() + (bias_ ? bias_->value.size() : 0); }
  std::size_t in_channels() const { return weight_.value.dim(1); }
  std::size_t out_channels() const { return weight_.value.dim(0); }
  std::size_t kernel_h() const { return weight_.value.dim(2); }
  std::size_t kernel_w() const { return weight_.value.dim(3); }
  const ConvGeometry& geometry() const { return geom_; }
  ParamState<T>& weight() { return weight_; }
  std::optional<ParamState<T>>& bias() { return bias_; }

 private:
  std::span<const T> bias_values() const {
    return bias_ ? bias_->value.values() : std::span<const T>{};
  }

  ParamState<T> weight_;
  std::optional<ParamState<T>> bias_;
  ConvGeometry geom_;
  Tensor<T> input_;
};

/// A 1x3 convolution followed by a 3x1 convolution, both stride 1.
template <typename T>
class SeparableConv {
 public:
  SeparableConv() = default;
  SeparableConv(const std::string& name, std::size_t in_channels, std::size_t out_channels,
                bool with_bias)
      : row_(name + ".row", in_channels, out_channels, 1, 3, 1, with_bias),
        col_(name + ".col", out_channels, out_channels, 3, 1, 1, with_bias) {}

  void initialize(std::mt19937_64& rng) {
    row_.initialize(rng);
    col_.initialize(rng);
  }
  Tensor<T> forward(const Tensor<T>& input) { return col_.forward(row_.forward(input)); }
  Tensor<T> backward(const Tensor<T>& grad_output) {
    return row_.backward(col_.backward(grad_output));
  }
  void collect(std::vector<ParamState<T>*>& out) {
    row_.collect(out);
    col_.collect(out);
  }
  std::size_t param_count() const { return row_.param_count() + col_.param_count(); }
  const Conv2d<T>& row() const { return row_; }
  const Conv2d<T>& col() const { return col_; }

 private:
  Conv2d<T> row_;
  Conv2d<T> col_;
};

template <typename T>
class BatchNorm {
 public:
  BatchNorm() = default;
  BatchNorm(const std::string& name, std::size_t channels)
      : gamma_(name + ".gamma", Tensor<T>({channels}, T{1})),
        beta_(name + ".beta", Tensor<T>({channels}, T{0})) {}

  Tensor<T> forward(const Tensor<T>& input) {
    return batchnorm_forward<T>(input, gamma_.value.values(), beta_.value.values(),
                                static_cast<T>(kBatchNormEps), &cache_);
  }
  Tensor<T> backward(const Tensor<T>& grad_output) {
    auto g = batchnorm_backward<T>(grad_output, gamma_.value.values(), cache_);
    gamma_.accumulate(g.gamma);
    beta_.accumulate(g.beta);
    return std::move(g.input);
  }
  void collect(std::vector<ParamState<T>*>& out) {
    out.push_back(&gamma_);
    out.push_back(&beta_);
  }
  std::size_t param_count() const { return gamma_.value.size() + beta_.value.size(); }
  std::size_t channels() const { return gamma_.value.size(); }
  ParamState<T>& gamma() { return gamma_; }
  ParamState<T>& beta() { return beta_; }

 private:
  ParamState<T> gamma_;
  ParamState<T> beta_;
  BatchNormCache<T> cache_;
};

template <typename T>
class ReLU {
 public:
  Tensor<T> forward(const Tensor<T>& input) {
    output_ = relu_forward<T>(input);
    return output_;
  }
  Tensor<T> backward(const Tensor<T>& grad_output) {
    return relu_backward<T>(grad_output, output_);
  }

 private:
  Tensor<T> output_;
};

/// Bilinear resize to a target extent; `factor` gives the nominal target.
template <typename T>
class BilinearResize {
 public:
  BilinearResize() = default;
  explicit BilinearResize(std::size_t factor) : factor_(factor) {
    if (factor < 1) throw std::invalid_argument("resize factor must be >= 1");
  }

  Tensor<T> forward(const Tensor<T>& input) {
    return forward_to(input, input.height() * factor_, input.width() * factor_);
  }
  Tensor<T> forward_to(const Tensor<T>& input, std::size_t out_h, std::size_t out_w) {
    in_h_ = input.height();
    in_w_ = input.width();
    return bilinear_resize_forward<T>(input, out_h, out_w);
  }
  Tensor<T> backward(const Tensor<T>& grad_output) {
    return bilinear_resize_backward<T>(grad_output, in_h_, in_w_);
  }
  std::size_t factor() const { return factor_; }

 private:
  std::size_t factor_ = 1;
  std::size_t in_h_ = 0;
  std::size_t in_w_ = 0;
};

template <typename T>
class Concat {
 public:
  Tensor<T> forward(const Tensor<T>& a, const Tensor<T>& b) {
    split_ = a.channels();
    return concat_channels<T>(a, b);
  }
  std::pair<Tensor<T>, Tensor<T>> backward(const Tensor<T>& grad_output) const {
    return split_channels<T>(grad_output, split_);
  }

 private:
  std::size_t split_ = 0;
};

/// Encoder/decoder block: BN, then a 1x1 shortcut (stride s) alongside a
/// residual path [3x3 stride s, ReLU, 1x3, 3x1]; the two halves are
/// concatenated, passed through ReLU and resized.
template <typename T>
class Block {
 public:
  Block() = default;
  Block(const std::string& name, std::size_t in_channels, std::size_t out_channels,
        std::size_t stride, std::size_t resize)
      : bn_(name + ".bn", in_channels),
        shortcut_(name + ".shortcut", in_channels, out_channels / 2, 1, 1, stride, true),
        residual_(name + ".residual", in_channels, out_channels - out_channels / 2, 3, 3, stride,
                  true),
        separable_(name + ".sep", out_channels - out_channels / 2,
                   out_channels - out_channels / 2, true),
        resize_(resize),
        in_channels_(in_channels),
        out_channels_(out_channels),
        stride_(stride) {
    if (out_channels < 2) throw std::invalid_argument("block needs at least 2 output channels");
  }

  void initialize(std::mt19937_64& rng) {
    shortcut_.initialize(rng);
    residual_.initialize(rng);
    separable_.initialize(rng);
  }

  Tensor<T> forward(const Tensor<T>& input, std::size_t out_h, std::size_t out_w) {
    Tensor<T> normed = bn_.forward(input);
    Tensor<T> shortcut = shortcut_.forward(normed);
    Tensor<T> residual = separable_.forward(mid_relu_.forward(residual_.forward(normed)));
    Tensor<T> joined = out_relu_.forward(concat_.forward(shortcut, residual));
    return resize_.forward_to(joined, out_h, out_w);
  }

  Tensor<T> backward(const Tensor<T>& grad_output) {
    auto [g_short, g_res] = concat_.backward(out_relu_.backward(resize_.backward(grad_output)));
    Tensor<T> g_normed = shortcut_.backward(g_short);
    Tensor<T> g_from_res = residual_.backward(mid_relu_.backward(separable_.backward(g_res)));
    for (std::size_t i = 0; i < g_normed.size(); ++i) g_normed[i] += g_from_res[i];
    return bn_.backward(g_normed);
  }

  void collect(std::vector<ParamState<T>*>& out) {
    bn_.collect(out);
    shortcut_.collect(out);
    residual_.collect(out);
    separable_.collect(out);
  }

  std::size_t param_count() const {
    return bn_.param_count() + shortcut_.param_count() + residual_.param_count() +
           separable_.param_count();
  }

  std::size_t in_channels() const { return in_channels_; }
  std::size_t out_channels() const { return out_channels_; }
  std::size_t stride() const { return stride_; }
  std::size_t resize() const { return resize_.factor(); }
  const Conv2d<T>& shortcut() const { return shortcut_; }
  const Conv2d<T>& residual() const { return residual_; }
  const SeparableConv<T>& separable() const { return separable_; }

 private:
  BatchNorm<T> bn_;
  Conv2d<T> shortcut_;
  Conv2d<T> residual_;
  ReLU<T> mid_relu_;
  SeparableConv<T> separable_;
  Concat<T> concat_;
  ReLU<T> out_relu_;
  BilinearResize<T> resize_;
  std::size_t in_channels_ = 0;
  std::size_t out_channels_ = 0;
  std::size_t stride_ = 1;
};

}  // namespace jitstream
