#include "jitstream/pretrain.hpp"

#include <stdexcept>

namespace jitstream {

namespace {

double unit(std::uint64_t key, std::uint64_t slot) {
  return static_cast<double>(mix64(key ^ mix64(slot)) >> 11) * 0x1.0p-53;
}

}  // namespace

void PretrainCorpusConfig::validate() const {
  if (width == 0 || height == 0) throw std::invalid_argument("pretrain corpus: zero frame size");
  if (class_count < 1 || class_count > 254) {
    throw std::invalid_argument("pretrain corpus: class_count must be in [1, 254]");
  }
  if (min_objects > max_objects) {
    throw std::invalid_argument("pretrain corpus: min_objects exceeds max_objects");
  }
  if (!(size.lo > 0.0) || size.hi < size.lo) {
    throw std::invalid_argument("pretrain corpus: invalid size range");
  }
}

ShapeKind shape_for_class(std::size_t class_id) {
  constexpr ShapeKind kinds[] = {ShapeKind::Disc, ShapeKind::Rectangle, ShapeKind::Blob};
  return kinds[(class_id + 2) % 3];
}

SyntheticStreamConfig pretrain_scene_config(const PretrainCorpusConfig& cfg, std::size_t index) {
  const std::uint64_t key = derive_seed(cfg.seed, "scene:" + std::to_string(index));
  SyntheticStreamConfig s;
  s.width = cfg.width;
  s.height = cfg.height;
  s.num_frames = 1;
  s.class_count = cfg.class_count;
  s.seed = key;
  const std::size_t span = cfg.max_objects - cfg.min_objects + 1;
  const std::size_t count =
      cfg.min_objects + std::min(span - 1, static_cast<std::size_t>(unit(key, 1) * span));
  for (std::size_t i = 0; i < count; ++i) {
    SyntheticObject o;
    const auto cls = 1 + std::min(cfg.class_count - 1,
                                  static_cast<std::size_t>(unit(key, 10 + i) * cfg.class_count));
    o.class_id = static_cast<std::uint8_t>(cls);
    o.shape = shape_for_class(cls);
    o.size = cfg.size;
    o.vx = o.vy = {0.0, 0.0};
    o.texture_seed = mix64(key + 100 + i);
    s.objects.push_back(o);
  }
  return s;
}

std::vector<LabeledFrame> make_pretrain_corpus(const PretrainCorpusConfig& cfg,
                                               const DistillConfig& labels) {
  cfg.validate();
  std::vector<LabeledFrame> out;
  out.reserve(cfg.scenes);
  for (std::size_t i = 0; i < cfg.scenes; ++i) {
    const SyntheticStream stream(pretrain_scene_config(cfg, i));
    auto [frame, scene] = stream.frame_and_scene(0);
    const TeacherOutput kept = retain(OracleTeacher::instances_from_scene(scene), labels.conf_thresh);
    LabeledFrame lf;
    lf.frame_index = i;
    lf.labels = rasterize_teacher(kept, 0.0, cfg.width, cfg.height);
    lf.weights = build_weight_map(kept, labels.box_dilation, labels.weight_factor, cfg.width,
                                  cfg.height);
    lf.frame = std::move(frame);
    out.push_back(std::move(lf));
  }
  return out;
}

}  // namespace jitstream
