#pragma once

// Brute-force reference computations shared by the unit tests and the
// acceptance runner. They favour obviousness over speed.

#include <algorithm>
#include <iterator>
#include <map>
#include <optional>
#include <set>
#include <vector>

#include "jitstream/image.hpp"
#include "jitstream/teacher.hpp"

namespace jitstream::testing {

/// Mean IoU by collecting per-class pixel index sets and intersecting them.
inline std::optional<double> oracle_mean_iou(const LabelMap& pred, const LabelMap& label,
                                             bool exclude_background) {
  std::map<int, std::set<std::size_t>> p, l;
  for (std::size_t i = 0; i < label.labels.size(); ++i) {
    if (label.labels[i] == kIgnoreLabel) continue;
    p[pred.labels[i]].insert(i);
    l[label.labels[i]].insert(i);
  }
  std::set<int> classes;
  for (auto& [c, _] : p) classes.insert(c);
  for (auto& [c, _] : l) classes.insert(c);
  double sum = 0.0;
  int n = 0;
  for (int c : classes) {
    if (exclude_background && c == 0) continue;
    std::vector<std::size_t> inter, uni;
    std::set_intersection(p[c].begin(), p[c].end(), l[c].begin(), l[c].end(),
                          std::back_inserter(inter));
    std::set_union(p[c].begin(), p[c].end(), l[c].begin(), l[c].end(), std::back_inserter(uni));
    if (uni.empty()) continue;
    sum += static_cast<double>(inter.size()) / static_cast<double>(uni.size());
    ++n;
  }
  if (n == 0) return std::nullopt;
  return sum / n;
}

/// Per pixel: the covering instance at or above the threshold with the
/// highest confidence, the later one on a tie.
inline LabelMap max_confidence_oracle(const TeacherOutput& insts, double thresh, int w, int h) {
  LabelMap out(static_cast<std::size_t>(w), static_cast<std::size_t>(h));
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      float best = -1.0f;
      for (const auto& inst : insts) {
        if (inst.confidence < thresh || !inst.covers(x, y)) continue;
        if (inst.confidence >= best) {
          best = inst.confidence;
          out.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y)) = inst.class_id;
        }
      }
    }
  }
  return out;
}

inline TeacherInstance box_instance(std::uint8_t cls, float conf, BoundingBox box) {
  TeacherInstance inst;
  inst.class_id = cls;
  inst.confidence = conf;
  inst.box = box;
  inst.mask.assign(static_cast<std::size_t>(box.width() * box.height()), 1);
  return inst;
}

/// Random box with a ragged mask and a coarse confidence (ties are common).
template <typename Rng>
TeacherInstance random_instance(Rng& rng, int w, int h) {
  std::uniform_int_distribution<int> x(0, w - 1), y(0, h - 1), cls(1, 5);
  const int x0 = x(rng), y0 = y(rng);
  const int x1 = std::min(w, x0 + 1 + x(rng) / 2), y1 = std::min(h, y0 + 1 + y(rng) / 2);
  TeacherInstance inst = box_instance(static_cast<std::uint8_t>(cls(rng)), 0.0f, {x0, y0, x1, y1});
  for (auto& m : inst.mask) m = rng() % 5 != 0;
  inst.confidence = static_cast<float>(rng() % 11) / 10.0f;
  return inst;
}

/// Uniform class ids in [0, classes), with an optional share of ignored pixels.
template <typename Rng>
LabelMap random_label_map(std::size_t w, std::size_t h, std::size_t classes, Rng& rng,
                          double ignore_rate = 0.0) {
  LabelMap m(w, h);
  std::uniform_int_distribution<int> cls(0, static_cast<int>(classes) - 1);
  std::bernoulli_distribution ignore(ignore_rate);
  for (auto& v : m.labels) v = ignore(rng) ? kIgnoreLabel : static_cast<std::uint8_t>(cls(rng));
  return m;
}

}  // namespace jitstream::testing
