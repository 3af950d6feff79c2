#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "jitstream/arch.hpp"
#include "jitstream/metrics.hpp"
#include "jitstream/teacher.hpp"

namespace jitstream {

/// A non-finite training loss, with the frame it occurred on.
class NumericFailure : public std::runtime_error {
 public:
  NumericFailure(std::size_t frame, const std::string& message)
      : std::runtime_error(message), frame_(frame) {}
  std::size_t frame() const { return frame_; }

 private:
  std::size_t frame_;
};

struct DistillConfig {
  std::size_t u_max = 8;
  std::size_t delta_min = 8;
  std::size_t delta_max = 64;
  double a_thresh = 0.8;
  double lr = 0.01;
  double momentum = 0.9;
  double conf_thresh = 0.5;
  double weight_factor = 5.0;
  double box_dilation = 0.15;

  void validate() const;
};

/// Instances with confidence >= conf_thresh, in their original order.
TeacherOutput retain(const TeacherOutput& instances, double conf_thresh);

/// Class-id map from retained instances. Instances are painted in ascending
/// confidence (stable for ties), so the most confident one wins an overlap.
LabelMap rasterize_teacher(const TeacherOutput& instances, double conf_thresh, std::size_t width,
                           std::size_t height);

/// Each side moves outward by (dilation / 2) * side length; the low edge is
/// floored, the high edge ceiled, and the result clamped to the frame.
BoundingBox dilate_box(const BoundingBox& box, double dilation, std::size_t width,
                       std::size_t height);

/// weight_factor inside the union of dilated boxes, 1 elsewhere.
WeightMap build_weight_map(const TeacherOutput& retained, double box_dilation,
                           double weight_factor, std::size_t width, std::size_t height);

/// Accuracy signal used by the scheduler: mean IoU over the classes present
/// in prediction or label, without background unless it is the only class.
/// Empty when every label pixel is ignored.
std::optional<double> control_iou(const LabelMap& prediction, const LabelMap& label);

/// Doubles the stride when a_curr > a_thresh, halves it otherwise; clamped.
std::size_t update_stride(std::size_t delta, double a_curr, const DistillConfig& cfg);

struct UpdateOutcome {
  double loss = 0.0;
  bool applied = false;  // false when the loss was non-finite or degenerate
};

/// What the adaptation loop needs from a model.
class Student {
 public:
  virtual ~Student() = default;
  /// Called once before any other call for a given frame.
  virtual void begin_frame(std::size_t /*frame_index*/) {}
  virtual LabelMap predict(const Frame& frame) = 0;
  /// One weighted cross-entropy SGD step on the frame.
  virtual UpdateOutcome update(const Frame& frame, const LabelMap& labels,
                               const WeightMap& weights, double lr, double momentum) = 0;
};

/// Student backed by a float network. A predict() immediately followed by
/// update() on the same frame reuses the forward pass.
class NetworkStudent : public Student {
 public:
  explicit NetworkStudent(std::shared_ptr<Network<float>> net) : net_(std::move(net)) {}

  void begin_frame(std::size_t) override { cached_ = nullptr; }
  LabelMap predict(const Frame& frame) override;
  UpdateOutcome update(const Frame& frame, const LabelMap& labels, const WeightMap& weights,
                       double lr, double momentum) override;

  Network<float>& network() { return *net_; }

 private:
  std::shared_ptr<Network<float>> net_;
  const Frame* cached_ = nullptr;
  Tensor<float> logits_;
};

struct AdaptResult {
  std::size_t updates = 0;
  std::optional<double> a_curr;
  LabelMap prediction;  // from the final loop iteration
  bool numeric_failure = false;
};

/// The bounded per-teacher-frame loop: predict, score, and take an SGD step
/// while fewer than u_max steps were taken and a_curr < a_thresh.
AdaptResult adapt_on_frame(Student& student, const Frame& frame, const LabelMap& labels,
                           const WeightMap& weights, const DistillConfig& cfg);

class BackoffScheduler {
 public:
  explicit BackoffScheduler(const DistillConfig& cfg) : cfg_(cfg), delta_(cfg.delta_min) {}

  bool is_teacher_frame(std::size_t t) const { return t % delta_ == 0; }
  void record(double a_curr) { delta_ = update_stride(delta_, a_curr, cfg_); }
  std::size_t delta() const { return delta_; }

 private:
  DistillConfig cfg_;
  std::size_t delta_;
};

struct FrameRecord {
  std::size_t frame_index = 0;
  bool teacher_invoked = false;
  bool teacher_failed = false;
  std::size_t updates = 0;
  std::optional<double> a_curr;
  std::size_t delta = 0;  // stride in effect after this frame
  std::optional<double> iou_vs_teacher;
  std::optional<double> iou_vs_truth;
  bool numeric_failure = false;
  LabelMap prediction;
};

struct StreamReport {
  StreamCounters counters;
  std::size_t teacher_failures = 0;
  std::vector<std::size_t> numeric_failure_frames;
  ConfusionAccumulator vs_teacher;
  ConfusionAccumulator vs_truth;
  std::vector<FrameRecord> records;
};

struct StreamOptions {
  /// Labels every frame for evaluation only; not counted as a teacher
  /// invocation. When it is the scheduling teacher, teacher-frame labels are reused.
  Teacher* eval_teacher = nullptr;
  std::function<std::optional<LabelMap>(std::size_t)> ground_truth;
  std::function<void(const FrameRecord&)> on_frame;
  bool keep_predictions = true;
  std::optional<std::size_t> max_frames;
};

/// Runs the scheduled distillation loop over the whole source, in order.
StreamReport process_stream(FrameSource& source, Teacher& teacher, Student& student,
                            const DistillConfig& cfg, const StreamOptions& options = {});

struct LabeledFrame {
  std::size_t frame_index = 0;
  Frame frame;
  LabelMap labels;
  WeightMap weights;
};

/// Frames 0, k, 2k, ... of the source with rasterized teacher labels.
std::vector<LabeledFrame> sample_every_kth(FrameSource& source, Teacher& teacher, std::size_t k,
                                           const DistillConfig& cfg);

struct OfflineTrainOptions {
  std::size_t epochs = 10;
  double lr = 0.01;
  double lr_decay = 1.0;  // lr multiplier applied after every epoch
  double momentum = 0.9;
  std::uint64_t seed = 1;
};

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  double mean_loss = 0.0;
  double train_mean_iou = 0.0;
};

/// Epoch training over a fixed labeled set, one frame per step, shuffled
/// every epoch with a seeded permutation. Throws NumericFailure on a
/// non-finite loss.
std::vector<EpochStats> offline_oracle_train(Student& student,
                                             const std::vector<LabeledFrame>& dataset,
                                             const OfflineTrainOptions& options);

}  // namespace jitstream
