#pragma once

#include <cstdint>
#include <span>

#include "jitstream/tensor.hpp"

namespace jitstream {

template <typename T>
struct LossResult {
  double loss = 0.0;
  Tensor<T> grad;          // d loss / d logits, same shape as the logits
  bool degenerate = false; // every pixel had zero weight or the ignore label
};

/// Weighted softmax cross-entropy over a (C, H, W) logit map, normalized by
/// the total weight of the contributing pixels. Pixels labelled 255 are skipped.
template <typename T>
LossResult<T> weighted_softmax_cross_entropy(const Tensor<T>& logits,
                                             std::span<const std::uint8_t> labels,
                                             std::span<const float> weights);

}  // namespace jitstream
