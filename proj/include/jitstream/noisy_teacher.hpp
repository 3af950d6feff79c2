#pragma once

#include <cstdint>
#include <memory>

#include "jitstream/teacher.hpp"

namespace jitstream {

struct TeacherNoise {
  int boundary_jitter_px = 0;
  double confidence_spread = 0.0;
  double drop_prob = 0.0;

  void validate() const;
  bool is_zero() const {
    return boundary_jitter_px == 0 && confidence_spread == 0.0 && drop_prob == 0.0;
  }
};

/// Grows or shrinks a full-frame mask by `radius` pixels with a disc
/// structuring element (positive dilates, negative erodes). Pixels outside
/// the frame count as inside the mask when eroding.
std::vector<std::uint8_t> morph_disc(std::span<const std::uint8_t> mask, std::size_t width,
                                     std::size_t height, int radius);

/// Wraps another teacher. For instance i of frame t the draws depend only on
/// (seed, t, i): drop with probability drop_prob, jitter the mask by an
/// integer radius in [-j, j], add a uniform offset in [-spread, spread] to
/// the confidence (clamped to [0, 1]). Instances eroded to nothing are dropped.
class NoisyTeacher : public Teacher {
 public:
  NoisyTeacher(std::shared_ptr<Teacher> base, TeacherNoise noise, std::uint64_t seed);

  std::optional<TeacherOutput> predict(std::size_t frame_index, const Frame& frame) override;
  double cost_per_invocation_ms() const override { return base_->cost_per_invocation_ms(); }

 private:
  std::shared_ptr<Teacher> base_;
  TeacherNoise noise_;
  std::uint64_t seed_;
};

}  // namespace jitstream
