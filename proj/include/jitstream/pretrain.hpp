#pragma once

#include <cstdint>

#include "jitstream/distill.hpp"
#include "jitstream/kv_config.hpp"
#include "jitstream/synthetic.hpp"

namespace jitstream {

/// Randomized single-frame scenes for pretraining. Class c is drawn with the
/// same shape convention as the standard stream (1 disc, 2 rectangle,
/// 3 blob, repeating), with fresh positions, sizes, textures and background.
struct PretrainCorpusConfig {
  std::size_t width = 96;
  std::size_t height = 96;
  std::size_t class_count = 3;
  std::size_t scenes = 500;
  std::size_t min_objects = 1;
  std::size_t max_objects = 4;
  Range size{14.0, 28.0};
  std::uint64_t seed = 7;

  void validate() const;
};

ShapeKind shape_for_class(std::size_t class_id);

/// The stream config whose frame 0 is scene `index` of the corpus.
SyntheticStreamConfig pretrain_scene_config(const PretrainCorpusConfig& cfg, std::size_t index);

std::vector<LabeledFrame> make_pretrain_corpus(const PretrainCorpusConfig& cfg,
                                               const DistillConfig& labels);

}  // namespace jitstream
