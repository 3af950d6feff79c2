#include <cmath>
#include <map>
#include <stdexcept>

#include "jitstream/arch.hpp"

namespace jitstream {

std::string_view stage_kind_name(StageKind kind) {
  switch (kind) {
    case StageKind::Stem: return "stem";
    case StageKind::Encoder: return "encoder";
    case StageKind::Decoder: return "decoder";
    case StageKind::Head: return "head";
    case StageKind::Classifier: return "classifier";
  }
  return "?";
}

std::vector<StagePlan> default_channel_plan() {
  return {
      {StageKind::Stem, 2, 1, 8},      {StageKind::Stem, 2, 1, 8},
      {StageKind::Encoder, 2, 1, 64},  {StageKind::Encoder, 2, 1, 64},
      {StageKind::Encoder, 2, 1, 128}, {StageKind::Decoder, 1, 2, 64},
      {StageKind::Decoder, 1, 2, 32},  {StageKind::Decoder, 1, 4, 32},
      {StageKind::Head, 1, 1, 32},     {StageKind::Head, 1, 2, 32},
      {StageKind::Classifier, 1, 1, 0},
  };
}

std::size_t scale_channels(std::size_t base, double multiplier) {
  const double scaled = static_cast<double>(base) * multiplier;
  const auto rounded = static_cast<std::size_t>(std::llround(scaled / 4.0)) * 4;
  return std::max<std::size_t>(rounded, 4);
}

void ArchConfig::validate() const {
  if (num_classes < 1 || num_classes > 254) {
    throw std::invalid_argument("num_classes must be in [1, 254]");
  }
  if (!(width_multiplier > 0.0)) throw std::invalid_argument("width_multiplier must be > 0");
  if (!(input_scale > 0.0 && input_scale <= 4.0)) {
    throw std::invalid_argument("input_scale must be in (0, 4]");
  }
  if (plan.empty() || plan.back().kind != StageKind::Classifier) {
    throw std::invalid_argument("plan must end with a classifier stage");
  }
  std::size_t encoders = 0, decoders = 0;
  std::size_t cumulative = 1;
  for (std::size_t i = 0; i < plan.size(); ++i) {
    const auto& s = plan[i];
    if (i > 0 && static_cast<int>(s.kind) < static_cast<int>(plan[i - 1].kind)) {
      throw std::invalid_argument("plan stages out of order at stage " + std::to_string(i));
    }
    if (s.kind == StageKind::Classifier && i + 1 != plan.size()) {
      throw std::invalid_argument("only the last stage may be a classifier");
    }
    if (s.stride < 1) throw std::invalid_argument("stride must be >= 1");
    if (s.resize < 1) throw std::invalid_argument("resize must be >= 1");
    if (s.kind != StageKind::Classifier && s.channels < 1) {
      throw std::invalid_argument("channel count must be >= 1");
    }
    encoders += s.kind == StageKind::Encoder;
    decoders += s.kind == StageKind::Decoder;
    cumulative *= s.stride;
    if (cumulative % s.resize != 0) {
      throw std::invalid_argument("resolution ledger: stage " + std::to_string(i) +
                                  " resizes past the input resolution");
    }
    cumulative /= s.resize;
  }
  if (cumulative != 1) {
    throw std::invalid_argument(
        "resolution ledger: product of strides does not equal product of resize factors");
  }
  if (skip_connections && encoders != decoders) {
    throw std::invalid_argument("skip connections need as many decoders as encoders");
  }
}

template <typename T>
Network<T>::Network(ArchConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  std::mt19937_64 rng(seed);

  std::size_t encoders = 0, decoders = 0;
  for (const auto& s : config_.plan) {
    encoders += s.kind == StageKind::Encoder;
    decoders += s.kind == StageKind::Decoder;
  }

  std::vector<int> encoder_stage;  // encoder k (0-based) -> stage index
  std::vector<std::size_t> stage_out_channels;
  std::size_t in_channels = 3;
  std::size_t stem = 0, head = 0, dec = 0;
  for (std::size_t i = 0; i < config_.plan.size(); ++i) {
    const StagePlan& p = config_.plan[i];
    const std::size_t out = p.kind == StageKind::Classifier
                                ? config_.num_classes
                                : scale_channels(p.channels, config_.width_multiplier);
    int source = -1;
    std::string name;
    switch (p.kind) {
      case StageKind::Stem: name = "stem" + std::to_string(++stem); break;
      case StageKind::Head: name = "head" + std::to_string(++head); break;
      case StageKind::Classifier: name = "classifier"; break;
      case StageKind::Encoder:
        encoder_stage.push_back(static_cast<int>(i));
        name = "enc" + std::to_string(encoder_stage.size());
        break;
      case StageKind::Decoder: {
        const std::size_t k = decoders - dec++;  // decoder k mirrors encoder k
        name = "dec" + std::to_string(k);
        if (config_.skip_connections && k < encoders) {
          source = encoder_stage.at(k - 1);
          in_channels += stage_out_channels.at(static_cast<std::size_t>(source));
        }
        break;
      }
    }

    if (p.kind == StageKind::Encoder || p.kind == StageKind::Decoder) {
      Block<T> block(name, in_channels, out, p.stride, p.resize);
      block.initialize(rng);
      stages_.emplace_back(std::move(block));
    } else {
      const std::size_t k = p.kind == StageKind::Classifier ? 1 : 3;
      ConvStage stage{Conv2d<T>(name, in_channels, out, k, k, p.stride, true), ReLU<T>{},
                      BilinearResize<T>(p.resize), p.kind != StageKind::Classifier};
      stage.conv.initialize(rng);
      stages_.emplace_back(std::move(stage));
    }
    names_.push_back(name);
    skip_source_.push_back(source);
    stage_in_channels_.push_back(in_channels);
    stage_out_channels.push_back(out);
    in_channels = out;
  }
}

template <typename T>
std::pair<std::size_t, std::size_t> Network<T>::scaled_input(std::size_t height,
                                                             std::size_t width) const {
  if (config_.input_scale == 1.0) return {height, width};
  const auto h = static_cast<std::size_t>(std::llround(static_cast<double>(height) * config_.input_scale));
  const auto w = static_cast<std::size_t>(std::llround(static_cast<double>(width) * config_.input_scale));
  return {std::max<std::size_t>(h, 1), std::max<std::size_t>(w, 1)};
}

// Upsampling stages snap to the extent recorded at the same cumulative
// stride on the way down, so skip junctions line up for any input size.
template <typename T>
std::vector<typename Network<T>::StageGeometry> Network<T>::plan_geometry(std::size_t height,
                                                                          std::size_t width) const {
  std::map<std::size_t, std::pair<std::size_t, std::size_t>> extents;
  extents[1] = {height, width};
  std::size_t h = height, w = width, cumulative = 1;
  std::vector<StageGeometry> geo(stages_.size());
  for (std::size_t i = 0; i < stages_.size(); ++i) {
    const StagePlan& p = config_.plan[i];
    StageGeometry& g = geo[i];
    g.skip_from = skip_source_[i];
    if (g.skip_from >= 0) {
      const auto& src = geo[static_cast<std::size_t>(g.skip_from)];
      if (src.out_h != h || src.out_w != w) {
        throw std::invalid_argument("skip junction at " + names_[i] + ": encoder extent " +
                                    std::to_string(src.out_h) + "x" + std::to_string(src.out_w) +
                                    " vs decoder extent " + std::to_string(h) + "x" +
                                    std::to_string(w));
      }
    }
    g.in_h = h;
    g.in_w = w;
    const std::size_t k = p.kind == StageKind::Classifier ? 1 : 3;
    g.conv_h = conv_output_extent(h, k, p.stride, k / 2);
    g.conv_w = conv_output_extent(w, k, p.stride, k / 2);
    cumulative *= p.stride;
    extents.try_emplace(cumulative, g.conv_h, g.conv_w);
    g.out_h = g.conv_h;
    g.out_w = g.conv_w;
    if (p.resize > 1) {
      cumulative /= p.resize;
      auto it = extents.find(cumulative);
      if (it != extents.end()) {
        std::tie(g.out_h, g.out_w) = it->second;
      } else {
        g.out_h = g.conv_h * p.resize;
        g.out_w = g.conv_w * p.resize;
        extents.emplace(cumulative, std::make_pair(g.out_h, g.out_w));
      }
    }
    h = g.out_h;
    w = g.out_w;
  }
  return geo;
}

template <typename T>
Tensor<T> Network<T>::forward(const Tensor<T>& frame) {
  require_rank(frame.shape(), 3, "network input");
  if (frame.dim(0) != 3) throw std::invalid_argument("network input must have 3 channels");
  frame_h_ = frame.dim(1);
  frame_w_ = frame.dim(2);
  const auto [sh, sw] = scaled_input(frame_h_, frame_w_);
  const bool scaled = sh != frame_h_ || sw != frame_w_;
  geometry_ = plan_geometry(sh, sw);
  concat_split_.assign(stages_.size(), 0);

  std::vector<Tensor<T>> saved(stages_.size());
  std::vector<bool> is_source(stages_.size(), false);
  for (int s : skip_source_)
    if (s >= 0) is_source[static_cast<std::size_t>(s)] = true;

  Tensor<T> x = scaled ? input_resize_.forward_to(frame, sh, sw) : frame;
  for (std::size_t i = 0; i < stages_.size(); ++i) {
    const StageGeometry& g = geometry_[i];
    if (g.skip_from >= 0) {
      concat_split_[i] = x.channels();
      x = concat_channels<T>(x, saved[static_cast<std::size_t>(g.skip_from)]);
    }
    if (auto* cs = std::get_if<ConvStage>(&stages_[i])) {
      Tensor<T> y = cs->conv.forward(x);
      if (cs->activation) y = cs->relu.forward(y);
      x = cs->resize.forward_to(y, g.out_h, g.out_w);
    } else {
      x = std::get<Block<T>>(stages_[i]).forward(x, g.out_h, g.out_w);
    }
    if (is_source[i]) saved[i] = x;
  }
  if (scaled) x = output_resize_.forward_to(x, frame_h_, frame_w_);
  return x;
}

template <typename T>
Tensor<T> Network<T>::backward(const Tensor<T>& grad_logits) {
  if (geometry_.empty()) throw std::logic_error("backward called before forward");
  const auto [sh, sw] = scaled_input(frame_h_, frame_w_);
  const bool scaled = sh != frame_h_ || sw != frame_w_;
  Tensor<T> g = scaled ? output_resize_.backward(grad_logits) : grad_logits;

  std::vector<Tensor<T>> skip_grads(stages_.size());
  for (std::size_t ii = stages_.size(); ii-- > 0;) {
    if (!skip_grads[ii].empty()) {
      for (std::size_t j = 0; j < g.size(); ++j) g[j] += skip_grads[ii][j];
    }
    if (auto* cs = std::get_if<ConvStage>(&stages_[ii])) {
      g = cs->resize.backward(g);
      if (cs->activation) g = cs->relu.backward(g);
      g = cs->conv.backward(g);
    } else {
      g = std::get<Block<T>>(stages_[ii]).backward(g);
    }
    if (skip_source_[ii] >= 0) {
      auto [main, skip] = split_channels<T>(g, concat_split_[ii]);
      g = std::move(main);
      auto& slot = skip_grads[static_cast<std::size_t>(skip_source_[ii])];
      if (slot.empty()) {
        slot = std::move(skip);
      } else {
        for (std::size_t j = 0; j < slot.size(); ++j) slot[j] += skip[j];
      }
    }
  }
  if (scaled) g = input_resize_.backward(g);
  return g;
}

template <typename T>
std::vector<ParamState<T>*> Network<T>::parameters() {
  std::vector<ParamState<T>*> out;
  for (auto& stage : stages_) {
    std::visit(
        [&out](auto& s) {
          if constexpr (std::is_same_v<std::decay_t<decltype(s)>, ConvStage>) {
            s.conv.collect(out);
          } else {
            s.collect(out);
          }
        },
        stage);
  }
  return out;
}

template <typename T>
std::size_t Network<T>::parameter_count() const {
  std::size_t total = 0;
  for (const auto& s : stages()) total += s.param_count;
  return total;
}

template <typename T>
std::vector<StageSummary> Network<T>::stages() const {
  std::vector<StageSummary> out;
  for (std::size_t i = 0; i < stages_.size(); ++i) {
    StageSummary s{names_[i], config_.plan[i].kind, stage_in_channels_[i], 0, 0};
    if (const auto* cs = std::get_if<ConvStage>(&stages_[i])) {
      s.out_channels = cs->conv.out_channels();
      s.param_count = cs->conv.param_count();
    } else {
      const auto& b = std::get<Block<T>>(stages_[i]);
      s.out_channels = b.out_channels();
      s.param_count = b.param_count();
    }
    out.push_back(std::move(s));
  }
  return out;
}

template <typename T>
std::vector<SkipEdge> Network<T>::skip_edges() const {
  std::vector<SkipEdge> edges;
  std::size_t encoders = 0;
  std::vector<std::size_t> encoder_number(stages_.size(), 0);
  for (std::size_t i = 0; i < stages_.size(); ++i) {
    if (config_.plan[i].kind == StageKind::Encoder) encoder_number[i] = ++encoders;
  }
  for (std::size_t i = 0; i < stages_.size(); ++i) {
    if (skip_source_[i] < 0) continue;
    const std::size_t k = encoder_number[static_cast<std::size_t>(skip_source_[i])];
    edges.push_back({k, k});
  }
  return edges;
}

template <typename T>
std::vector<ConvCost> Network<T>::conv_costs(std::size_t height, std::size_t width) const {
  const auto [sh, sw] = scaled_input(height, width);
  const auto geo = plan_geometry(sh, sw);
  std::vector<ConvCost> costs;
  auto add = [&costs](const std::string& name, const Conv2d<T>& c, std::size_t oh,
                      std::size_t ow) {
    costs.push_back({name, c.in_channels(), c.out_channels(), c.kernel_h(), c.kernel_w(), oh, ow});
  };
  for (std::size_t i = 0; i < stages_.size(); ++i) {
    const auto& g = geo[i];
    if (const auto* cs = std::get_if<ConvStage>(&stages_[i])) {
      add(names_[i], cs->conv, g.conv_h, g.conv_w);
    } else {
      const auto& b = std::get<Block<T>>(stages_[i]);
      add(names_[i] + ".shortcut", b.shortcut(), g.conv_h, g.conv_w);
      add(names_[i] + ".residual", b.residual(), g.conv_h, g.conv_w);
      add(names_[i] + ".sep.row", b.separable().row(), g.conv_h, g.conv_w);
      add(names_[i] + ".sep.col", b.separable().col(), g.conv_h, g.conv_w);
    }
  }
  return costs;
}

template class Network<float>;
template class Network<double>;

}  // namespace jitstream
