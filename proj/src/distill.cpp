#include "jitstream/distill.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include "jitstream/loss.hpp"
#include "jitstream/optim.hpp"

namespace jitstream {

namespace {

// Removes floating-point dust so that e.g. 40 * 0.075 does not ceil to 4.
double snap(double v) {
  const double r = std::round(v);
  return std::abs(v - r) < 1e-9 ? r : v;
}

bool is_power_of_two(std::size_t v) { return v && (v & (v - 1)) == 0; }

}  // namespace

void DistillConfig::validate() const {
  if (delta_min < 1 || delta_min > delta_max) {
    throw std::invalid_argument("delta_min must satisfy 1 <= delta_min <= delta_max");
  }
  if (delta_max % delta_min != 0 || !is_power_of_two(delta_max / delta_min)) {
    throw std::invalid_argument("delta_max / delta_min must be a power of two");
  }
  if (!(a_thresh > 0.0 && a_thresh < 1.0)) throw std::invalid_argument("a_thresh must lie in (0, 1)");
  if (u_max < 1) throw std::invalid_argument("u_max must be >= 1");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw std::invalid_argument("lr must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("momentum must lie in [0, 1)");
  if (!(conf_thresh >= 0.0 && conf_thresh <= 1.0)) {
    throw std::invalid_argument("conf_thresh must lie in [0, 1]");
  }
  if (!(weight_factor > 0.0)) throw std::invalid_argument("weight_factor must be positive");
  if (!(box_dilation >= 0.0)) throw std::invalid_argument("box_dilation must be >= 0");
}

TeacherOutput retain(const TeacherOutput& instances, double conf_thresh) {
  TeacherOutput out;
  for (const auto& inst : instances) {
    if (static_cast<double>(inst.confidence) >= conf_thresh) out.push_back(inst);
  }
  return out;
}

LabelMap rasterize_teacher(const TeacherOutput& instances, double conf_thresh, std::size_t width,
                           std::size_t height) {
  LabelMap out(width, height);
  std::vector<const TeacherInstance*> order;
  for (const auto& inst : instances) {
    if (static_cast<double>(inst.confidence) >= conf_thresh) order.push_back(&inst);
  }
  std::stable_sort(order.begin(), order.end(),
                   [](const TeacherInstance* a, const TeacherInstance* b) {
                     return a->confidence < b->confidence;
                   });
  const int w = static_cast<int>(width), h = static_cast<int>(height);
  for (const TeacherInstance* inst : order) {
    for (int y = std::max(inst->box.y0, 0); y < std::min(inst->box.y1, h); ++y) {
      for (int x = std::max(inst->box.x0, 0); x < std::min(inst->box.x1, w); ++x) {
        if (inst->covers(x, y)) out.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y)) = inst->class_id;
      }
    }
  }
  return out;
}

BoundingBox dilate_box(const BoundingBox& box, double dilation, std::size_t width,
                       std::size_t height) {
  const double gx = 0.5 * dilation * box.width();
  const double gy = 0.5 * dilation * box.height();
  BoundingBox out;
  out.x0 = std::max(0, static_cast<int>(std::floor(snap(box.x0 - gx))));
  out.y0 = std::max(0, static_cast<int>(std::floor(snap(box.y0 - gy))));
  out.x1 = std::min(static_cast<int>(width), static_cast<int>(std::ceil(snap(box.x1 + gx))));
  out.y1 = std::min(static_cast<int>(height), static_cast<int>(std::ceil(snap(box.y1 + gy))));
  return out;
}

WeightMap build_weight_map(const TeacherOutput& retained, double box_dilation,
                           double weight_factor, std::size_t width, std::size_t height) {
  WeightMap out(width, height, 1.0f);
  const auto factor = static_cast<float>(weight_factor);
  for (const auto& inst : retained) {
    const BoundingBox b = dilate_box(inst.box, box_dilation, width, height);
    for (int y = b.y0; y < b.y1; ++y) {
      for (int x = b.x0; x < b.x1; ++x) {
        out.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y)) = factor;
      }
    }
  }
  return out;
}

std::optional<double> control_iou(const LabelMap& prediction, const LabelMap& label) {
  ConfusionAccumulator acc;
  acc.add(prediction, label);
  if (auto fg = acc.mean_iou(true).mean) return fg;
  return acc.mean_iou(false).mean;
}

std::size_t update_stride(std::size_t delta, double a_curr, const DistillConfig& cfg) {
  if (a_curr > cfg.a_thresh) return std::min(cfg.delta_max, 2 * delta);
  return std::max(cfg.delta_min, delta / 2);
}

LabelMap NetworkStudent::predict(const Frame& frame) {
  logits_ = net_->forward(frame_to_tensor<float>(frame));
  cached_ = &frame;
  return argmax_labels(logits_);
}

UpdateOutcome NetworkStudent::update(const Frame& frame, const LabelMap& labels,
                                     const WeightMap& weights, double lr, double momentum) {
  if (cached_ != &frame) {
    logits_ = net_->forward(frame_to_tensor<float>(frame));
    cached_ = &frame;
  }
  auto loss = weighted_softmax_cross_entropy<float>(logits_, labels.labels, weights.weights);
  if (!std::isfinite(loss.loss) || loss.degenerate) return {loss.loss, false};
  auto params = net_->parameters();
  for (auto* p : params) p->zero_grad();
  net_->backward(loss.grad);
  sgd_momentum_step<float>(params, static_cast<float>(lr), static_cast<float>(momentum));
  cached_ = nullptr;
  return {loss.loss, true};
}

AdaptResult adapt_on_frame(Student& student, const Frame& frame, const LabelMap& labels,
                           const WeightMap& weights, const DistillConfig& cfg) {
  AdaptResult r;
  for (std::size_t u = 0;; ++u) {
    r.prediction = student.predict(frame);
    r.a_curr = control_iou(r.prediction, labels);
    const double a = r.a_curr.value_or(0.0);
    if (!(u < cfg.u_max && a < cfg.a_thresh)) break;
    const UpdateOutcome step = student.update(frame, labels, weights, cfg.lr, cfg.momentum);
    if (!std::isfinite(step.loss)) {
      r.numeric_failure = true;
      break;
    }
    if (!step.applied) break;
    ++r.updates;
  }
  return r;
}

StreamReport process_stream(FrameSource& source, Teacher& teacher, Student& student,
                            const DistillConfig& cfg, const StreamOptions& options) {
  cfg.validate();
  StreamReport report;
  BackoffScheduler scheduler(cfg);
  while (!options.max_frames || report.counters.frames < *options.max_frames) {
    auto next = source.next();
    if (!next) break;
    const std::size_t t = next->index;
    const Frame& frame = next->frame;
    student.begin_frame(t);

    FrameRecord rec;
    rec.frame_index = t;
    std::optional<LabelMap> teacher_labels;
    bool predicted = false;
    if (scheduler.is_teacher_frame(t)) {
      if (auto out = teacher.predict(t, frame)) {
        rec.teacher_invoked = true;
        ++report.counters.teacher_invocations;
        const TeacherOutput kept = retain(*out, cfg.conf_thresh);
        teacher_labels = rasterize_teacher(kept, 0.0, frame.width, frame.height);
        const WeightMap weights =
            build_weight_map(kept, cfg.box_dilation, cfg.weight_factor, frame.width, frame.height);
        AdaptResult ar = adapt_on_frame(student, frame, *teacher_labels, weights, cfg);
        rec.updates = ar.updates;
        rec.a_curr = ar.a_curr;
        rec.prediction = std::move(ar.prediction);
        predicted = true;
        report.counters.updates += ar.updates;
        if (ar.numeric_failure) {
          rec.numeric_failure = true;
          report.numeric_failure_frames.push_back(t);
        }
        scheduler.record(ar.a_curr.value_or(0.0));
      } else {
        rec.teacher_failed = true;
        ++report.teacher_failures;
      }
    }
    if (!predicted) rec.prediction = student.predict(frame);
    rec.delta = scheduler.delta();

    if (options.eval_teacher) {
      std::optional<LabelMap> ref;
      if (options.eval_teacher == &teacher && teacher_labels) {
        ref = teacher_labels;
      } else if (auto out = options.eval_teacher->predict(t, frame)) {
        ref = rasterize_teacher(*out, cfg.conf_thresh, frame.width, frame.height);
      }
      if (ref) {
        rec.iou_vs_teacher = mean_iou(rec.prediction, *ref, true).mean;
        report.vs_teacher.add(rec.prediction, *ref);
      }
    }
    if (options.ground_truth) {
      if (auto truth = options.ground_truth(t)) {
        rec.iou_vs_truth = mean_iou(rec.prediction, *truth, true).mean;
        report.vs_truth.add(rec.prediction, *truth);
      }
    }
    ++report.counters.frames;
    if (options.on_frame) options.on_frame(rec);
    if (!options.keep_predictions) rec.prediction = LabelMap();
    report.records.push_back(std::move(rec));
  }
  return report;
}

std::vector<LabeledFrame> sample_every_kth(FrameSource& source, Teacher& teacher, std::size_t k,
                                           const DistillConfig& cfg) {
  if (k == 0) throw std::invalid_argument("sampling interval must be >= 1");
  std::vector<LabeledFrame> out;
  while (auto next = source.next()) {
    if (next->index % k != 0) continue;
    auto inst = teacher.predict(next->index, next->frame);
    if (!inst) continue;
    const TeacherOutput kept = retain(*inst, cfg.conf_thresh);
    LabeledFrame lf;
    lf.frame_index = next->index;
    lf.labels = rasterize_teacher(kept, 0.0, next->frame.width, next->frame.height);
    lf.weights = build_weight_map(kept, cfg.box_dilation, cfg.weight_factor, next->frame.width,
                                  next->frame.height);
    lf.frame = std::move(next->frame);
    out.push_back(std::move(lf));
  }
  return out;
}

std::vector<EpochStats> offline_oracle_train(Student& student,
                                             const std::vector<LabeledFrame>& dataset,
                                             const OfflineTrainOptions& options) {
  if (dataset.empty()) throw std::invalid_argument("offline training needs a non-empty dataset");
  std::vector<EpochStats> stats;
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(options.seed);
  double lr = options.lr;
  for (std::size_t epoch = 1; epoch <= options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0, iou_sum = 0.0;
    std::size_t loss_n = 0, iou_n = 0;
    for (std::size_t idx : order) {
      const LabeledFrame& lf = dataset[idx];
      student.begin_frame(lf.frame_index);
      const LabelMap pred = student.predict(lf.frame);
      if (auto iou = mean_iou(pred, lf.labels, true).mean) {
        iou_sum += *iou;
        ++iou_n;
      }
      const UpdateOutcome step = student.update(lf.frame, lf.labels, lf.weights, lr, options.momentum);
      if (!std::isfinite(step.loss)) {
        throw NumericFailure(lf.frame_index, "non-finite loss on training frame " +
                                 std::to_string(lf.frame_index) + " in epoch " +
                                 std::to_string(epoch));
      }
      loss_sum += step.loss;
      ++loss_n;
    }
    stats.push_back({epoch, loss_n ? loss_sum / static_cast<double>(loss_n) : 0.0,
                     iou_n ? iou_sum / static_cast<double>(iou_n) : 0.0});
    lr *= options.lr_decay;
  }
  return stats;
}

}  // namespace jitstream
