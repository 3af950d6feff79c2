#include "jitstream/loss.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "jitstream/image.hpp"

namespace jitstream {

template <typename T>
LossResult<T> weighted_softmax_cross_entropy(const Tensor<T>& logits,
                                             std::span<const std::uint8_t> labels,
                                             std::span<const float> weights) {
  require_rank(logits.shape(), 3, "cross-entropy logits");
  const std::size_t classes = logits.dim(0);
  const std::size_t n = logits.dim(1) * logits.dim(2);
  if (labels.size() != n || weights.size() != n) {
    throw std::invalid_argument("cross-entropy: label/weight maps have " +
                                std::to_string(labels.size()) + "/" +
                                std::to_string(weights.size()) + " pixels, logits have " +
                                std::to_string(n));
  }

  LossResult<T> result;
  result.grad = Tensor<T>(logits.shape());

  double total_weight = 0.0;
  for (std::size_t p = 0; p < n; ++p) {
    if (labels[p] == kIgnoreLabel) continue;
    if (labels[p] >= classes) {
      throw std::invalid_argument("cross-entropy: label " + std::to_string(labels[p]) +
                                  " out of range for " + std::to_string(classes) + " classes");
    }
    if (weights[p] < 0.0f) throw std::invalid_argument("cross-entropy: negative weight");
    total_weight += weights[p];
  }
  if (total_weight <= 0.0) {
    result.degenerate = true;
    return result;
  }

  const T inv_total = static_cast<T>(1.0 / total_weight);
  std::vector<T> prob(classes);
  double loss = 0.0;
  for (std::size_t p = 0; p < n; ++p) {
    const std::uint8_t label = labels[p];
    if (label == kIgnoreLabel || weights[p] == 0.0f) continue;
    T max_logit = logits[p];
    for (std::size_t c = 1; c < classes; ++c) max_logit = std::max(max_logit, logits[c * n + p]);
    T denom{0};
    for (std::size_t c = 0; c < classes; ++c) {
      prob[c] = std::exp(logits[c * n + p] - max_logit);
      denom += prob[c];
    }
    const T w = static_cast<T>(weights[p]);
    for (std::size_t c = 0; c < classes; ++c) {
      prob[c] /= denom;
      const T target = c == label ? T{1} : T{0};
      result.grad[c * n + p] = w * (prob[c] - target) * inv_total;
    }
    const double log_p =
        static_cast<double>(logits[label * n + p] - max_logit) - std::log(static_cast<double>(denom));
    loss -= static_cast<double>(weights[p]) * log_p;
  }
  result.loss = loss / total_weight;
  return result;
}

template LossResult<float> weighted_softmax_cross_entropy(const Tensor<float>&,
                                                          std::span<const std::uint8_t>,
                                                          std::span<const float>);
template LossResult<double> weighted_softmax_cross_entropy(const Tensor<double>&,
                                                           std::span<const std::uint8_t>,
                                                           std::span<const float>);

}  // namespace jitstream
