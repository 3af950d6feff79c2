#include "jitstream/noisy_teacher.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "jitstream/kv_config.hpp"

namespace jitstream {

namespace {

double draw(std::uint64_t key, std::uint64_t slot) {
  return static_cast<double>(mix64(key ^ mix64(slot)) >> 11) * 0x1.0p-53;
}

}  // namespace

void TeacherNoise::validate() const {
  if (boundary_jitter_px < 0) throw std::invalid_argument("boundary_jitter_px must be >= 0");
  if (!(confidence_spread >= 0.0)) throw std::invalid_argument("confidence_spread must be >= 0");
  if (!(drop_prob >= 0.0 && drop_prob < 1.0)) {
    throw std::invalid_argument("drop_prob must lie in [0, 1)");
  }
}

std::vector<std::uint8_t> morph_disc(std::span<const std::uint8_t> mask, std::size_t width,
                                     std::size_t height, int radius) {
  std::vector<std::uint8_t> out(mask.begin(), mask.end());
  if (radius == 0) return out;
  const int r = std::abs(radius);
  std::vector<std::pair<int, int>> offsets;
  for (int dy = -r; dy <= r; ++dy)
    for (int dx = -r; dx <= r; ++dx)
      if (dx * dx + dy * dy <= r * r) offsets.emplace_back(dx, dy);

  const int w = static_cast<int>(width), h = static_cast<int>(height);
  auto at = [&](int x, int y) {
    if (x < 0 || y < 0 || x >= w || y >= h) return radius < 0;
    return mask[static_cast<std::size_t>(y) * width + static_cast<std::size_t>(x)] != 0;
  };
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      bool v;
      if (radius > 0) {
        v = std::any_of(offsets.begin(), offsets.end(),
                        [&](auto o) { return at(x + o.first, y + o.second); });
      } else {
        v = std::all_of(offsets.begin(), offsets.end(),
                        [&](auto o) { return at(x + o.first, y + o.second); });
      }
      out[static_cast<std::size_t>(y) * width + static_cast<std::size_t>(x)] = v ? 1 : 0;
    }
  }
  return out;
}

NoisyTeacher::NoisyTeacher(std::shared_ptr<Teacher> base, TeacherNoise noise, std::uint64_t seed)
    : base_(std::move(base)), noise_(noise), seed_(seed) {
  if (!base_) throw std::invalid_argument("NoisyTeacher: null base teacher");
  noise_.validate();
}

std::optional<TeacherOutput> NoisyTeacher::predict(std::size_t frame_index, const Frame& frame) {
  auto base = base_->predict(frame_index, frame);
  if (!base || noise_.is_zero()) return base;

  TeacherOutput out;
  for (std::size_t i = 0; i < base->size(); ++i) {
    const std::uint64_t key = mix64(seed_ ^ mix64(frame_index * 0x9E3779B97F4A7C15ULL + i));
    if (draw(key, 1) < noise_.drop_prob) continue;
    TeacherInstance inst = (*base)[i];
    const int j = noise_.boundary_jitter_px;
    if (j > 0) {
      const int k = std::min(static_cast<int>(draw(key, 2) * (2 * j + 1)), 2 * j) - j;
      if (k != 0) {
        const auto m = morph_disc(inst.frame_mask(frame.width, frame.height), frame.width,
                                  frame.height, k);
        auto moved = TeacherInstance::from_frame_mask(inst.class_id, inst.confidence, m,
                                                      frame.width, frame.height);
        if (!moved) continue;
        inst = std::move(*moved);
      }
    }
    if (noise_.confidence_spread > 0.0) {
      const double c = inst.confidence + noise_.confidence_spread * (2.0 * draw(key, 3) - 1.0);
      inst.confidence = static_cast<float>(std::clamp(c, 0.0, 1.0));
    }
    out.push_back(std::move(inst));
  }
  return out;
}

}  // namespace jitstream
