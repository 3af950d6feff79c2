#pragma once

#include <cstdint>
#include <functional>
#include <set>
#include <vector>

#include "jitstream/distill.hpp"

namespace jitstream::testing {

/// All-black frames with contiguous indices.
class BlankFrameSource : public FrameSource {
 public:
  BlankFrameSource(std::size_t width, std::size_t height, std::size_t frames)
      : width_(width), height_(height), frames_(frames) {}

  std::optional<IndexedFrame> next() override {
    if (cursor_ >= frames_) return std::nullopt;
    return IndexedFrame{cursor_++, Frame(width_, height_)};
  }
  void rewind() override { cursor_ = 0; }
  std::optional<std::size_t> length() const override { return frames_; }

 private:
  std::size_t width_, height_, frames_;
  std::size_t cursor_ = 0;
};

/// One full-frame class-1 instance per frame; fails on the listed frames.
class UniformTeacher : public Teacher {
 public:
  explicit UniformTeacher(std::set<std::size_t> failing = {}) : failing_(std::move(failing)) {}

  std::optional<TeacherOutput> predict(std::size_t t, const Frame& frame) override {
    calls.push_back(t);
    if (failing_.count(t)) return std::nullopt;
    TeacherInstance inst;
    inst.class_id = 1;
    inst.confidence = 1.0f;
    inst.box = {0, 0, static_cast<int>(frame.width), static_cast<int>(frame.height)};
    inst.mask.assign(frame.width * frame.height, 1);
    return TeacherOutput{inst};
  }

  std::vector<std::size_t> calls;

 private:
  std::set<std::size_t> failing_;
};

/// Predicts all class 1 (a pass against UniformTeacher) when
/// passes(frame, updates taken on this frame) holds, else all background.
class ScriptedStudent : public Student {
 public:
  using Script = std::function<bool(std::size_t frame, std::size_t updates)>;
  explicit ScriptedStudent(Script passes) : passes_(std::move(passes)) {}

  void begin_frame(std::size_t t) override {
    frame_ = t;
    updates_ = 0;
  }
  LabelMap predict(const Frame& f) override {
    ++predictions;
    return LabelMap(f.width, f.height, passes_(frame_, updates_) ? 1 : 0);
  }
  UpdateOutcome update(const Frame&, const LabelMap&, const WeightMap&, double, double) override {
    ++updates_;
    ++total_updates;
    return {1.0, true};
  }

  std::size_t predictions = 0;
  std::size_t total_updates = 0;

 private:
  Script passes_;
  std::size_t frame_ = 0;
  std::size_t updates_ = 0;
};

struct SimulatedFrame {
  bool teacher = false;
  std::size_t delta_after = 0;
};

/// Straight transcription of the scheduling rule for traces where a check
/// either passes or fails outright.
inline std::vector<SimulatedFrame> simulate_schedule(std::size_t frames, std::size_t dmin,
                                                     std::size_t dmax,
                                                     const std::function<bool(std::size_t)>& pass) {
  std::vector<SimulatedFrame> out(frames);
  std::size_t delta = dmin;
  for (std::size_t t = 0; t < frames; ++t) {
    if (t % delta == 0) {
      out[t].teacher = true;
      if (pass(t)) {
        delta = delta * 2 > dmax ? dmax : delta * 2;
      } else {
        delta = delta / 2 < dmin ? dmin : delta / 2;
      }
    }
    out[t].delta_after = delta;
  }
  return out;
}

}  // namespace jitstream::testing
