#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "jitstream/tensor.hpp"

namespace jitstream {

inline constexpr std::uint8_t kIgnoreLabel = 255;
inline constexpr std::uint8_t kBackground = 0;

/// Interleaved 8-bit RGB frame.
struct Frame {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> rgb;

  Frame() = default;
  Frame(std::size_t w, std::size_t h) : width(w), height(h), rgb(w * h * 3, 0) {}

  std::uint8_t* pixel(std::size_t x, std::size_t y) { return rgb.data() + (y * width + x) * 3; }
  const std::uint8_t* pixel(std::size_t x, std::size_t y) const {
    return rgb.data() + (y * width + x) * 3;
  }

  friend bool operator==(const Frame&, const Frame&) = default;
};

/// Per-pixel class ids, row-major. 255 marks ignored pixels.
struct LabelMap {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> labels;

  LabelMap() = default;
  LabelMap(std::size_t w, std::size_t h, std::uint8_t fill = kBackground)
      : width(w), height(h), labels(w * h, fill) {}

  std::uint8_t& at(std::size_t x, std::size_t y) { return labels[y * width + x]; }
  std::uint8_t at(std::size_t x, std::size_t y) const { return labels[y * width + x]; }

  friend bool operator==(const LabelMap&, const LabelMap&) = default;
};

struct WeightMap {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<float> weights;

  WeightMap() = default;
  WeightMap(std::size_t w, std::size_t h, float fill = 1.0f)
      : width(w), height(h), weights(w * h, fill) {}

  float& at(std::size_t x, std::size_t y) { return weights[y * width + x]; }
  float at(std::size_t x, std::size_t y) const { return weights[y * width + x]; }
};

/// Converts an RGB frame into a normalized (3, H, W) tensor.
template <typename T>
Tensor<T> frame_to_tensor(const Frame& frame) {
  Tensor<T> out({3, frame.height, frame.width});
  const std::size_t hw = frame.width * frame.height;
  for (std::size_t i = 0; i < hw; ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      out[c * hw + i] = (static_cast<T>(frame.rgb[i * 3 + c]) / T(255) - T(0.5)) / T(0.25);
    }
  }
  return out;
}

}  // namespace jitstream
