#include "jitstream/layers.hpp"

namespace jitstream {

std::string_view layer_kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::Conv2d: return "Conv2d";
    case LayerKind::SeparableConv: return "SeparableConv";
    case LayerKind::BatchNorm: return "BatchNorm";
    case LayerKind::ReLU: return "ReLU";
    case LayerKind::BilinearResize: return "BilinearResize";
    case LayerKind::Concat: return "Concat";
  }
  return "?";
}

void LayerSpec::validate() const {
  if (stride < 1) throw std::invalid_argument("LayerSpec: stride must be >= 1");
  if (resize < 1) throw std::invalid_argument("LayerSpec: resize factor must be >= 1");
  if (in_channels < 1 || out_channels < 1) {
    throw std::invalid_argument("LayerSpec: channel counts must be >= 1");
  }
  if (kind == LayerKind::Concat && (split < 1 || split >= in_channels)) {
    throw std::invalid_argument("LayerSpec: concat split must leave both operands non-empty");
  }
  if ((kind == LayerKind::Conv2d) && (kernel_h < 1 || kernel_w < 1)) {
    throw std::invalid_argument("LayerSpec: kernel extents must be >= 1");
  }
}

}  // namespace jitstream
