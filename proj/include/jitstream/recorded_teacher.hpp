#pragma once

// Recorded teacher predictions, one JSON object per line:
//   {"frame": 12, "instances": [{"class": 1, "conf": 0.93, "bbox": [x0, y0, x1, y1],
//                                "rle": [zeros, ones, zeros, ...]}]}
// Run lengths cover the binary mask row-major and start with a (possibly
// empty) zero-run. The mask is box-aligned when the runs sum to the box area
// and full-frame when they sum to width * height.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <stdexcept>
#include <vector>

#include "jitstream/teacher.hpp"

namespace jitstream {

class RecordedTeacherError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::vector<std::uint32_t> encode_rle(std::span<const std::uint8_t> mask);
std::vector<std::uint8_t> decode_rle(std::span<const std::uint32_t> runs);

/// Replays predictions from a JSON-lines file. Frames absent from the file
/// are reported as teacher failures.
class RecordedTeacher : public Teacher {
 public:
  RecordedTeacher(std::map<std::size_t, TeacherOutput> frames, double cost_ms = 300.0)
      : frames_(std::move(frames)), cost_ms_(cost_ms) {}

  /// Instances are clamped to the frame; ones left empty are discarded.
  static RecordedTeacher load(const std::filesystem::path& path, std::size_t width,
                              std::size_t height, double cost_ms = 300.0);
  static RecordedTeacher parse(std::istream& in, std::size_t width, std::size_t height,
                               const std::string& origin, double cost_ms = 300.0);

  std::optional<TeacherOutput> predict(std::size_t frame_index, const Frame& frame) override;
  double cost_per_invocation_ms() const override { return cost_ms_; }

  const std::map<std::size_t, TeacherOutput>& frames() const { return frames_; }

 private:
  std::map<std::size_t, TeacherOutput> frames_;
  double cost_ms_;
};

/// Writes box-aligned masks.
class RecordedTeacherWriter {
 public:
  explicit RecordedTeacherWriter(const std::filesystem::path& path);
  void append(std::size_t frame_index, const TeacherOutput& instances);

 private:
  std::ofstream out_;
};

}  // namespace jitstream
