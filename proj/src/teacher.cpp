#include "jitstream/teacher.hpp"

#include <algorithm>
#include <numeric>

namespace jitstream {

std::size_t TeacherInstance::area() const {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
}

std::optional<TeacherInstance> TeacherInstance::from_frame_mask(std::uint8_t class_id,
                                                                float confidence,
                                                                std::span<const std::uint8_t> mask,
                                                                std::size_t width,
                                                                std::size_t height) {
  int x0 = static_cast<int>(width), y0 = static_cast<int>(height), x1 = 0, y1 = 0;
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      if (!mask[y * width + x]) continue;
      x0 = std::min(x0, static_cast<int>(x));
      y0 = std::min(y0, static_cast<int>(y));
      x1 = std::max(x1, static_cast<int>(x) + 1);
      y1 = std::max(y1, static_cast<int>(y) + 1);
    }
  }
  if (x1 <= x0 || y1 <= y0) return std::nullopt;
  TeacherInstance inst;
  inst.class_id = class_id;
  inst.confidence = confidence;
  inst.box = {x0, y0, x1, y1};
  inst.mask.resize(static_cast<std::size_t>(inst.box.width() * inst.box.height()));
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) {
      inst.mask[static_cast<std::size_t>((y - y0) * inst.box.width() + (x - x0))] =
          mask[static_cast<std::size_t>(y) * width + static_cast<std::size_t>(x)] ? 1 : 0;
    }
  }
  return inst;
}

std::vector<std::uint8_t> TeacherInstance::frame_mask(std::size_t width, std::size_t height) const {
  std::vector<std::uint8_t> out(width * height, 0);
  for (int y = std::max(box.y0, 0); y < std::min(box.y1, static_cast<int>(height)); ++y) {
    for (int x = std::max(box.x0, 0); x < std::min(box.x1, static_cast<int>(width)); ++x) {
      if (covers(x, y)) out[static_cast<std::size_t>(y) * width + static_cast<std::size_t>(x)] = 1;
    }
  }
  return out;
}

bool TeacherInstance::clamp_to(std::size_t width, std::size_t height) {
  const BoundingBox clipped{std::max(box.x0, 0), std::max(box.y0, 0),
                            std::min(box.x1, static_cast<int>(width)),
                            std::min(box.y1, static_cast<int>(height))};
  if (clipped.empty()) return false;
  if (clipped == box) return area() > 0;
  std::vector<std::uint8_t> m(static_cast<std::size_t>(clipped.width() * clipped.height()));
  for (int y = clipped.y0; y < clipped.y1; ++y) {
    for (int x = clipped.x0; x < clipped.x1; ++x) {
      m[static_cast<std::size_t>((y - clipped.y0) * clipped.width() + (x - clipped.x0))] =
          covers(x, y) ? 1 : 0;
    }
  }
  box = clipped;
  mask = std::move(m);
  return area() > 0;
}

}  // namespace jitstream
