#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "jitstream/image.hpp"
#include "jitstream/layers.hpp"

namespace jitstream {

enum class StageKind { Stem, Encoder, Decoder, Head, Classifier };

std::string_view stage_kind_name(StageKind kind);

struct StagePlan {
  StageKind kind = StageKind::Stem;
  std::size_t stride = 1;
  std::size_t resize = 1;
  std::size_t channels = 0;  // ignored for the classifier, which emits num_classes
};

/// Two stride-2 3x3 stems (8), encoders (64, 64, 128), decoders resizing by
/// 2, 2, 4 (64, 32, 32), two 3x3 head convs (32; the second resizes by 2)
/// and a 1x1 classifier.
std::vector<StagePlan> default_channel_plan();

/// Rounds base * multiplier to the nearest multiple of 4, never below 4.
std::size_t scale_channels(std::size_t base, double multiplier);

struct ArchConfig {
  std::size_t num_classes = 4;
  double width_multiplier = 1.0;
  double input_scale = 1.0;
  bool skip_connections = true;
  std::vector<StagePlan> plan = default_channel_plan();

  /// Throws std::invalid_argument on an inconsistent plan or out-of-range knob.
  void validate() const;
};

struct SkipEdge {
  std::size_t encoder;  // 1-based encoder index
  std::size_t decoder;  // 1-based decoder index (decoder k mirrors encoder k)
};

struct StageSummary {
  std::string name;
  StageKind kind;
  std::size_t in_channels;
  std::size_t out_channels;
  std::size_t param_count;
};

/// One convolution of a forward pass at a given input size.
struct ConvCost {
  std::string name;
  std::size_t in_channels, out_channels, kernel_h, kernel_w, out_h, out_w;

  std::uint64_t multiply_adds() const {
    return static_cast<std::uint64_t>(in_channels) * out_channels * kernel_h * kernel_w * out_h *
           out_w;
  }
};

enum class FlopMode { Inference, TrainStep };

/// The student encoder-decoder. Owns parameters and the activations cached
/// by the last forward pass; not safe for concurrent use.
template <typename T>
class Network {
 public:
  Network(ArchConfig config, std::uint64_t seed);

  /// (3, H, W) frame tensor -> (num_classes, H, W) logits.
  Tensor<T> forward(const Tensor<T>& frame);

  /// Back-propagates d loss / d logits through the last forward pass,
  /// accumulating parameter gradients. Returns d loss / d frame.
  Tensor<T> backward(const Tensor<T>& grad_logits);

  std::vector<ParamState<T>*> parameters();
  std::size_t parameter_count() const;
  std::vector<StageSummary> stages() const;
  std::vector<SkipEdge> skip_edges() const;

  /// Every convolution executed by a forward pass on an H x W frame.
  std::vector<ConvCost> conv_costs(std::size_t height, std::size_t width) const;

  const ArchConfig& config() const { return config_; }

  template <typename U>
  void copy_parameters_from(Network<U>& other);

 private:
  struct ConvStage {
    Conv2d<T> conv;
    ReLU<T> relu;
    BilinearResize<T> resize;
    bool activation = true;
  };
  using Stage = std::variant<ConvStage, Block<T>>;

  struct StageGeometry {
    std::size_t in_h, in_w;      // after any skip concat
    std::size_t conv_h, conv_w;  // before the stage's resize
    std::size_t out_h, out_w;
    int skip_from = -1;          // stage index of the skip source, or -1
  };

  std::vector<StageGeometry> plan_geometry(std::size_t height, std::size_t width) const;
  std::pair<std::size_t, std::size_t> scaled_input(std::size_t height, std::size_t width) const;

  ArchConfig config_;
  std::vector<Stage> stages_;
  std::vector<std::string> names_;
  std::vector<int> skip_source_;  // per stage: source stage index, or -1
  std::vector<std::size_t> stage_in_channels_;

  // Forward state.
  std::vector<StageGeometry> geometry_;
  std::vector<std::size_t> concat_split_;
  std::size_t frame_h_ = 0, frame_w_ = 0;
  BilinearResize<T> input_resize_;
  BilinearResize<T> output_resize_;
};

extern template class Network<float>;
extern template class Network<double>;

/// Exact count of scalar parameters.
template <typename T>
std::size_t count_params(const Network<T>& net) {
  return net.parameter_count();
}

/// Analytic FLOPs with one multiply-add = 2 FLOPs. A training step is the
/// forward pass, a backward pass costed at twice the forward, and an SGD
/// update at 2 FLOPs per parameter.
template <typename T>
std::uint64_t estimate_flops(const Network<T>& net, std::size_t height, std::size_t width,
                             FlopMode mode) {
  std::uint64_t macs = 0;
  for (const auto& c : net.conv_costs(height, width)) macs += c.multiply_adds();
  const std::uint64_t forward = 2 * macs;
  if (mode == FlopMode::Inference) return forward;
  return forward + 2 * forward + 2 * static_cast<std::uint64_t>(net.parameter_count());
}

/// Per-pixel argmax of (C, H, W) logits.
template <typename T>
LabelMap argmax_labels(const Tensor<T>& logits) {
  const std::size_t classes = logits.dim(0), h = logits.dim(1), w = logits.dim(2);
  const std::size_t n = h * w;
  LabelMap out(w, h);
  for (std::size_t p = 0; p < n; ++p) {
    std::size_t best = 0;
    T best_v = logits[p];
    for (std::size_t c = 1; c < classes; ++c) {
      if (logits[c * n + p] > best_v) {
        best_v = logits[c * n + p];
        best = c;
      }
    }
    out.labels[p] = static_cast<std::uint8_t>(best);
  }
  return out;
}

template <typename T>
template <typename U>
void Network<T>::copy_parameters_from(Network<U>& other) {
  auto dst = parameters();
  auto src = other.parameters();
  if (dst.size() != src.size()) throw std::invalid_argument("parameter sets differ");
  for (std::size_t i = 0; i < dst.size(); ++i) {
    if (dst[i]->value.shape() != src[i]->value.shape()) {
      throw std::invalid_argument("parameter shape mismatch for " + dst[i]->name);
    }
    for (std::size_t j = 0; j < dst[i]->value.size(); ++j) {
      dst[i]->value[j] = static_cast<T>(src[i]->value[j]);
    }
  }
}

}  // namespace jitstream
