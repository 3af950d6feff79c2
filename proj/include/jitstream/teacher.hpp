#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "jitstream/image.hpp"

namespace jitstream {

/// Half-open pixel box [x0, x1) x [y0, y1).
struct BoundingBox {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;

  int width() const { return x1 - x0; }
  int height() const { return y1 - y0; }
  bool empty() const { return x1 <= x0 || y1 <= y0; }
  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

/// One teacher detection: class, confidence, box and a box-aligned binary mask.
struct TeacherInstance {
  std::uint8_t class_id = 0;
  float confidence = 0.0f;
  BoundingBox box;
  std::vector<std::uint8_t> mask;  // box.width() * box.height(), row-major, 0/1

  bool covers(int x, int y) const {
    if (x < box.x0 || x >= box.x1 || y < box.y0 || y >= box.y1) return false;
    return mask[static_cast<std::size_t>((y - box.y0) * box.width() + (x - box.x0))] != 0;
  }

  std::size_t area() const;

  /// Builds an instance from a full-frame mask, with a tight box. Returns
  /// nullopt for an empty mask.
  static std::optional<TeacherInstance> from_frame_mask(std::uint8_t class_id, float confidence,
                                                        std::span<const std::uint8_t> mask,
                                                        std::size_t width, std::size_t height);

  /// Full-frame 0/1 mask.
  std::vector<std::uint8_t> frame_mask(std::size_t width, std::size_t height) const;

  /// Clips the box (and mask) to the frame; returns false if nothing remains.
  bool clamp_to(std::size_t width, std::size_t height);

  friend bool operator==(const TeacherInstance&, const TeacherInstance&) = default;
};

using TeacherOutput = std::vector<TeacherInstance>;

struct IndexedFrame {
  std::size_t index = 0;
  Frame frame;
};

/// Ordered frames with contiguous indices from 0.
class FrameSource {
 public:
  virtual ~FrameSource() = default;
  virtual std::optional<IndexedFrame> next() = 0;
  virtual void rewind() = 0;
  /// Known length, or nullopt for an unbounded live source.
  virtual std::optional<std::size_t> length() const = 0;
};

class Teacher {
 public:
  virtual ~Teacher() = default;
  /// nullopt signals a teacher failure on this frame.
  virtual std::optional<TeacherOutput> predict(std::size_t frame_index, const Frame& frame) = 0;
  virtual double cost_per_invocation_ms() const { return 300.0; }
};

}  // namespace jitstream
