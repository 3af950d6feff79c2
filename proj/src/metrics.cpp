#include "jitstream/metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace jitstream {

ConfusionAccumulator::ConfusionAccumulator()
    : intersection_(256, 0), predicted_(256, 0), labelled_(256, 0) {}

void ConfusionAccumulator::add(const LabelMap& prediction, const LabelMap& label,
                               std::uint8_t ignore_label) {
  if (prediction.width != label.width || prediction.height != label.height) {
    throw std::invalid_argument("mean_iou: prediction and label shapes differ");
  }
  const std::size_t n = label.labels.size();
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint8_t l = label.labels[i];
    if (l == ignore_label) continue;
    const std::uint8_t p = prediction.labels[i];
    ++predicted_[p];
    ++labelled_[l];
    if (p == l) ++intersection_[l];
  }
}

void ConfusionAccumulator::merge(const ConfusionAccumulator& other) {
  for (std::size_t c = 0; c < 256; ++c) {
    intersection_[c] += other.intersection_[c];
    predicted_[c] += other.predicted_[c];
    labelled_[c] += other.labelled_[c];
  }
}

IouResult ConfusionAccumulator::mean_iou(bool exclude_background) const {
  IouResult result;
  double sum = 0.0;
  for (std::size_t c = exclude_background ? 1 : 0; c < 256; ++c) {
    const std::uint64_t uni = predicted_[c] + labelled_[c] - intersection_[c];
    if (uni == 0) continue;
    ClassIou ci{static_cast<std::uint8_t>(c), intersection_[c], uni,
                static_cast<double>(intersection_[c]) / static_cast<double>(uni)};
    sum += ci.iou;
    result.per_class.push_back(ci);
  }
  if (!result.per_class.empty()) result.mean = sum / static_cast<double>(result.per_class.size());
  return result;
}

IouResult mean_iou(const LabelMap& prediction, const LabelMap& label, bool exclude_background,
                   std::uint8_t ignore_label) {
  ConfusionAccumulator acc;
  acc.add(prediction, label, ignore_label);
  return acc.mean_iou(exclude_background);
}

std::vector<double> interval_series(std::span<const double> values, double fps,
                                    double interval_seconds) {
  if (!(fps > 0.0)) throw std::invalid_argument("interval_series: fps must be > 0");
  if (!(interval_seconds > 0.0)) throw std::invalid_argument("interval_series: interval must be > 0");
  const auto window =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(fps * interval_seconds)));
  std::vector<double> out;
  for (std::size_t start = 0; start < values.size(); start += window) {
    const std::size_t end = std::min(values.size(), start + window);
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t i = start; i < end; ++i) {
      if (std::isnan(values[i])) continue;
      sum += values[i];
      ++count;
    }
    out.push_back(count ? sum / static_cast<double>(count) : std::nan(""));
  }
  return out;
}

void CostModel::validate() const {
  if (teacher_ms < 0 || infer_ms < 0 || update_ms < 0) {
    throw std::invalid_argument("cost model entries must be >= 0");
  }
}

SpeedupResult speedup(const StreamCounters& counters, const CostModel& cost) {
  cost.validate();
  if (counters.frames == 0) throw std::invalid_argument("speedup: stream has no frames");
  SpeedupResult r;
  const auto n = static_cast<double>(counters.frames);
  r.total_ms = n * cost.infer_ms + static_cast<double>(counters.teacher_invocations) * cost.teacher_ms +
               static_cast<double>(counters.updates) * cost.update_ms;
  r.speedup = r.total_ms > 0 ? n * cost.teacher_ms / r.total_ms : 0.0;
  r.teacher_fraction = static_cast<double>(counters.teacher_invocations) / n;
  return r;
}

}  // namespace jitstream
