#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "jitstream/kv_config.hpp"
#include "jitstream/teacher.hpp"

namespace jitstream {

enum class ShapeKind { Disc, Rectangle, Blob };
enum class EventKind { Appear, Disappear, AppearanceShift, CameraPan };

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

struct SyntheticObject {
  std::uint8_t class_id = 1;
  ShapeKind shape = ShapeKind::Disc;
  Range size{12.0, 18.0};  // diameter / side length in pixels
  Range vx{-1.0, 1.0};     // pixels per frame
  Range vy{-1.0, 1.0};
  std::uint64_t texture_seed = 0;
};

struct StreamEvent {
  std::size_t frame = 0;
  EventKind kind = EventKind::Appear;
  std::size_t object = 0;  // appear / disappear / appearance_shift
  double pan_dx = 0.0;     // camera_pan: background velocity from this frame on
  double pan_dy = 0.0;
};

struct SyntheticStreamConfig {
  std::size_t width = 96;
  std::size_t height = 96;
  std::size_t num_frames = 2000;
  std::size_t class_count = 3;  // foreground classes; ids 1..class_count
  std::vector<SyntheticObject> objects;
  std::vector<StreamEvent> events;
  std::uint64_t seed = 1;
  bool flat_colors = false;

  void validate() const;
};

/// The bundled 2000-frame, 96x96, 3-class stream (appearance shift at frame 1000).
SyntheticStreamConfig standard_stream_config();

SyntheticStreamConfig parse_synthetic_config(const KeyValueFile& file);
SyntheticStreamConfig load_synthetic_config(const std::filesystem::path& path);
std::string format_synthetic_config(const SyntheticStreamConfig& cfg);

struct ObjectState {
  std::size_t index = 0;
  std::uint8_t class_id = 0;
  bool visible = false;
  double cx = 0.0, cy = 0.0;
  std::size_t appearance_epoch = 0;
};

/// Ground truth of one frame. `owner` holds the index of the topmost object
/// at each pixel, or -1.
struct SceneState {
  std::size_t frame_index = 0;
  std::vector<ObjectState> objects;
  LabelMap class_map;
  std::vector<int> owner;
};

/// Deterministic renderer: every frame is a pure function of (config, index).
class SyntheticStream {
 public:
  explicit SyntheticStream(SyntheticStreamConfig cfg);

  Frame render(std::size_t t) const;
  SceneState scene(std::size_t t) const;
  /// Renders and returns ground truth in one pass.
  std::pair<Frame, SceneState> frame_and_scene(std::size_t t) const;

  const SyntheticStreamConfig& config() const { return cfg_; }

 private:
  struct Derived {
    double size, aspect, vx, vy, x0, y0, half_w, half_h;
    double phase1, phase2;
  };

  bool inside(std::size_t obj, double dx, double dy) const;
  void object_color(std::size_t obj, std::size_t epoch, double dx, double dy,
                    std::uint8_t rgb[3]) const;
  void background_color(std::size_t t, double x, double y, std::uint8_t rgb[3]) const;
  std::pair<double, double> pan_offset(std::size_t t) const;
  std::vector<ObjectState> object_states(std::size_t t) const;
  void render_into(std::size_t t, Frame* frame, SceneState* scene) const;

  SyntheticStreamConfig cfg_;
  std::vector<Derived> derived_;
};

class SyntheticFrameSource : public FrameSource {
 public:
  explicit SyntheticFrameSource(std::shared_ptr<const SyntheticStream> stream)
      : stream_(std::move(stream)) {}

  std::optional<IndexedFrame> next() override;
  void rewind() override { cursor_ = 0; }
  std::optional<std::size_t> length() const override { return stream_->config().num_frames; }

 private:
  std::shared_ptr<const SyntheticStream> stream_;
  std::size_t cursor_ = 0;
};

/// Perfect teacher: one instance per visible object, mask = visible coverage,
/// confidence 1, tight box. Instances are listed in z-order.
class OracleTeacher : public Teacher {
 public:
  explicit OracleTeacher(std::shared_ptr<const SyntheticStream> stream,
                         double cost_ms = 300.0)
      : stream_(std::move(stream)), cost_ms_(cost_ms) {}

  std::optional<TeacherOutput> predict(std::size_t frame_index, const Frame& frame) override;
  double cost_per_invocation_ms() const override { return cost_ms_; }

  static TeacherOutput instances_from_scene(const SceneState& scene);

 private:
  std::shared_ptr<const SyntheticStream> stream_;
  double cost_ms_;
};

}  // namespace jitstream
