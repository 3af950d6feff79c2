#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "jitstream/image.hpp"

namespace jitstream {

struct ClassIou {
  std::uint8_t class_id = 0;
  std::uint64_t intersection = 0;
  std::uint64_t union_count = 0;
  double iou = 0.0;
};

struct IouResult {
  std::optional<double> mean;  // empty when no class is included
  std::vector<ClassIou> per_class;
};

/// Per-class intersection / prediction / label pixel counts.
class ConfusionAccumulator {
 public:
  ConfusionAccumulator();

  /// Pixels whose label equals `ignore_label` are skipped entirely.
  void add(const LabelMap& prediction, const LabelMap& label,
           std::uint8_t ignore_label = kIgnoreLabel);
  void merge(const ConfusionAccumulator& other);

  std::uint64_t intersection(std::size_t c) const { return intersection_[c]; }
  std::uint64_t predicted(std::size_t c) const { return predicted_[c]; }
  std::uint64_t labelled(std::size_t c) const { return labelled_[c]; }

  /// IoU per class with nonzero union; the mean is over those classes
  /// (background excluded on request).
  IouResult mean_iou(bool exclude_background) const;

 private:
  std::vector<std::uint64_t> intersection_;
  std::vector<std::uint64_t> predicted_;
  std::vector<std::uint64_t> labelled_;
};

IouResult mean_iou(const LabelMap& prediction, const LabelMap& label, bool exclude_background,
                   std::uint8_t ignore_label = kIgnoreLabel);

/// Means over consecutive windows of round(fps * interval_seconds) frames;
/// the final partial window is averaged over its own length. NaN entries
/// are skipped; a window with no finite entries yields NaN.
std::vector<double> interval_series(std::span<const double> values, double fps,
                                    double interval_seconds);

/// Milliseconds per teacher invocation, student inference, and student update.
struct CostModel {
  double teacher_ms = 300.0;
  double infer_ms = 7.0;
  double update_ms = 30.0;

  void validate() const;
};

struct StreamCounters {
  std::uint64_t frames = 0;
  std::uint64_t teacher_invocations = 0;
  std::uint64_t updates = 0;
};

struct SpeedupResult {
  double speedup = 0.0;
  double teacher_fraction = 0.0;
  double total_ms = 0.0;
};

/// total = N*t_infer + n_teacher*t_teacher + n_updates*t_update;
/// speedup = N*t_teacher / total.
SpeedupResult speedup(const StreamCounters& counters, const CostModel& cost);

}  // namespace jitstream
