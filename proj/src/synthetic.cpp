#include "jitstream/synthetic.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numbers>
#include <sstream>

namespace jitstream {

namespace {

double unit(std::uint64_t h) { return static_cast<double>(h >> 11) * 0x1.0p-53; }

double hash_unit(std::uint64_t a, std::uint64_t b, std::uint64_t c = 0) {
  return unit(mix64(a ^ mix64(b ^ mix64(c))));
}

double lerp(double a, double b, double t) { return a + (b - a) * t; }

double value_noise(std::uint64_t seed, double x, double y, double scale) {
  const double gx = x / scale, gy = y / scale;
  const double fx0 = std::floor(gx), fy0 = std::floor(gy);
  const auto ix = static_cast<std::int64_t>(fx0);
  const auto iy = static_cast<std::int64_t>(fy0);
  double fx = gx - fx0, fy = gy - fy0;
  fx = fx * fx * (3 - 2 * fx);
  fy = fy * fy * (3 - 2 * fy);
  auto lattice = [seed](std::int64_t i, std::int64_t j) {
    return hash_unit(seed, static_cast<std::uint64_t>(i) * 0x9E3779B1ULL,
                     static_cast<std::uint64_t>(j) * 0x85EBCA77ULL);
  };
  return lerp(lerp(lattice(ix, iy), lattice(ix + 1, iy), fx),
              lerp(lattice(ix, iy + 1), lattice(ix + 1, iy + 1), fx), fy);
}

void hsv_to_rgb(double h, double s, double v, std::uint8_t rgb[3]) {
  h = h - std::floor(h);
  const double hh = h * 6.0;
  const int sector = static_cast<int>(hh) % 6;
  const double f = hh - std::floor(hh);
  const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
  double r = v, g = t, b = p;
  switch (sector) {
    case 0: r = v; g = t; b = p; break;
    case 1: r = q; g = v; b = p; break;
    case 2: r = p; g = v; b = t; break;
    case 3: r = p; g = q; b = v; break;
    case 4: r = t; g = p; b = v; break;
    default: r = v; g = p; b = q; break;
  }
  auto to8 = [](double c) {
    return static_cast<std::uint8_t>(std::clamp(std::lround(c * 255.0), 0L, 255L));
  };
  rgb[0] = to8(r);
  rgb[1] = to8(g);
  rgb[2] = to8(b);
}

double bounce(double start, double velocity, double t, double lo, double hi) {
  const double span = hi - lo;
  if (span <= 0) return 0.5 * (lo + hi);
  double m = std::fmod(start - lo + velocity * t, 2 * span);
  if (m < 0) m += 2 * span;
  return lo + (m <= span ? m : 2 * span - m);
}

std::string fmt_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::string_view shape_name(ShapeKind s) {
  switch (s) {
    case ShapeKind::Disc: return "disc";
    case ShapeKind::Rectangle: return "rectangle";
    case ShapeKind::Blob: return "blob";
  }
  return "?";
}

std::string_view event_name(EventKind k) {
  switch (k) {
    case EventKind::Appear: return "appear";
    case EventKind::Disappear: return "disappear";
    case EventKind::AppearanceShift: return "appearance_shift";
    case EventKind::CameraPan: return "camera_pan";
  }
  return "?";
}

Range parse_range(const std::string& text, const std::string& what) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) {
    const double v = parse_double(text, what);
    return {v, v};
  }
  return {parse_double(text.substr(0, colon), what), parse_double(text.substr(colon + 1), what)};
}

}  // namespace

void SyntheticStreamConfig::validate() const {
  if (width == 0 || height == 0) throw std::invalid_argument("synthetic stream: zero frame size");
  if (class_count < 1 || class_count > 254) {
    throw std::invalid_argument("synthetic stream: class_count must be in [1, 254]");
  }
  for (std::size_t i = 0; i < objects.size(); ++i) {
    const auto& o = objects[i];
    if (o.class_id < 1 || o.class_id > class_count) {
      throw std::invalid_argument("synthetic stream: object " + std::to_string(i) +
                                  " has class id outside [1, class_count]");
    }
    if (!(o.size.lo > 0.0) || o.size.hi < o.size.lo) {
      throw std::invalid_argument("synthetic stream: object " + std::to_string(i) +
                                  " has zero or invalid size range");
    }
    if (o.vx.hi < o.vx.lo || o.vy.hi < o.vy.lo) {
      throw std::invalid_argument("synthetic stream: object " + std::to_string(i) +
                                  " has an inverted velocity range");
    }
  }
  for (std::size_t i = 0; i < events.size(); ++i) {
    const auto& e = events[i];
    if (e.frame >= num_frames) {
      throw std::invalid_argument("synthetic stream: event " + std::to_string(i) +
                                  " lies beyond the last frame");
    }
    if (i > 0 && e.frame <= events[i - 1].frame) {
      throw std::invalid_argument("synthetic stream: event frame indices must strictly increase");
    }
    if (e.kind != EventKind::CameraPan && e.object >= objects.size()) {
      throw std::invalid_argument("synthetic stream: event " + std::to_string(i) +
                                  " references unknown object " + std::to_string(e.object));
    }
  }
}

SyntheticStreamConfig standard_stream_config() {
  SyntheticStreamConfig cfg;
  cfg.width = 96;
  cfg.height = 96;
  cfg.num_frames = 2000;
  cfg.class_count = 3;
  cfg.seed = 20190401;
  cfg.objects = {
      {1, ShapeKind::Disc, {20, 26}, {-0.8, 0.8}, {-0.6, 0.6}, 11},
      {2, ShapeKind::Rectangle, {20, 28}, {-0.7, 0.7}, {-0.7, 0.7}, 22},
      {3, ShapeKind::Blob, {20, 26}, {-0.6, 0.6}, {-0.8, 0.8}, 33},
      {2, ShapeKind::Rectangle, {14, 18}, {-1.0, 1.0}, {-0.5, 0.5}, 44},
  };
  cfg.events = {
      {400, EventKind::CameraPan, 0, 0.4, 0.15},
      {700, EventKind::Appear, 3, 0, 0},
      {1000, EventKind::AppearanceShift, 0, 0, 0},
      {1500, EventKind::Disappear, 3, 0, 0},
      {1700, EventKind::CameraPan, 0, -0.3, 0.2},
  };
  return cfg;
}

SyntheticStreamConfig parse_synthetic_config(const KeyValueFile& file) {
  file.require_known({"width", "height", "num_frames", "class_count", "seed", "flat_colors",
                      "object", "event"});
  SyntheticStreamConfig cfg;
  for (const auto& e : file.entries()) {
    try {
      if (e.key == "width") cfg.width = parse_uint(e.value, e.key);
      else if (e.key == "height") cfg.height = parse_uint(e.value, e.key);
      else if (e.key == "num_frames") cfg.num_frames = parse_uint(e.value, e.key);
      else if (e.key == "class_count") cfg.class_count = parse_uint(e.value, e.key);
      else if (e.key == "seed") cfg.seed = parse_uint(e.value, e.key);
      else if (e.key == "flat_colors") cfg.flat_colors = parse_bool(e.value, e.key);
      else if (e.key == "object") {
        SyntheticObject o;
        for (const auto& [k, v] : parse_fields(e.value)) {
          if (k == "class") o.class_id = static_cast<std::uint8_t>(parse_uint(v, "object class"));
          else if (k == "shape") {
            if (v == "disc") o.shape = ShapeKind::Disc;
            else if (v == "rectangle") o.shape = ShapeKind::Rectangle;
            else if (v == "blob") o.shape = ShapeKind::Blob;
            else throw ConfigError("unknown shape '" + v + "'");
          } else if (k == "size") o.size = parse_range(v, "object size");
          else if (k == "vx") o.vx = parse_range(v, "object vx");
          else if (k == "vy") o.vy = parse_range(v, "object vy");
          else if (k == "texture_seed") o.texture_seed = parse_uint(v, "texture_seed");
          else throw ConfigError("unknown object field '" + k + "'");
        }
        cfg.objects.push_back(o);
      } else if (e.key == "event") {
        StreamEvent ev;
        for (const auto& [k, v] : parse_fields(e.value)) {
          if (k == "frame") ev.frame = parse_uint(v, "event frame");
          else if (k == "kind") {
            if (v == "appear") ev.kind = EventKind::Appear;
            else if (v == "disappear") ev.kind = EventKind::Disappear;
            else if (v == "appearance_shift") ev.kind = EventKind::AppearanceShift;
            else if (v == "camera_pan") ev.kind = EventKind::CameraPan;
            else throw ConfigError("unknown event kind '" + v + "'");
          } else if (k == "object") ev.object = parse_uint(v, "event object");
          else if (k == "dx") ev.pan_dx = parse_double(v, "event dx");
          else if (k == "dy") ev.pan_dy = parse_double(v, "event dy");
          else throw ConfigError("unknown event field '" + k + "'");
        }
        cfg.events.push_back(ev);
      }
    } catch (const ConfigError& err) {
      file.fail(e, err.what());
    }
  }
  try {
    cfg.validate();
  } catch (const std::invalid_argument& err) {
    throw ConfigError(file.origin() + ": " + err.what());
  }
  return cfg;
}

SyntheticStreamConfig load_synthetic_config(const std::filesystem::path& path) {
  return parse_synthetic_config(KeyValueFile::load(path));
}

std::string format_synthetic_config(const SyntheticStreamConfig& cfg) {
  std::ostringstream os;
  os << "width = " << cfg.width << "\n"
     << "height = " << cfg.height << "\n"
     << "num_frames = " << cfg.num_frames << "\n"
     << "class_count = " << cfg.class_count << "\n"
     << "seed = " << cfg.seed << "\n"
     << "flat_colors = " << (cfg.flat_colors ? "true" : "false") << "\n";
  for (const auto& o : cfg.objects) {
    os << "object = class=" << static_cast<int>(o.class_id) << " shape=" << shape_name(o.shape)
       << " size=" << fmt_double(o.size.lo) << ":" << fmt_double(o.size.hi)
       << " vx=" << fmt_double(o.vx.lo) << ":" << fmt_double(o.vx.hi)
       << " vy=" << fmt_double(o.vy.lo) << ":" << fmt_double(o.vy.hi)
       << " texture_seed=" << o.texture_seed << "\n";
  }
  for (const auto& e : cfg.events) {
    os << "event = frame=" << e.frame << " kind=" << event_name(e.kind);
    if (e.kind == EventKind::CameraPan) {
      os << " dx=" << fmt_double(e.pan_dx) << " dy=" << fmt_double(e.pan_dy);
    } else {
      os << " object=" << e.object;
    }
    os << "\n";
  }
  return os.str();
}

SyntheticStream::SyntheticStream(SyntheticStreamConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  const auto w = static_cast<double>(cfg_.width), h = static_cast<double>(cfg_.height);
  for (std::size_t i = 0; i < cfg_.objects.size(); ++i) {
    const auto& o = cfg_.objects[i];
    const std::uint64_t key = mix64(cfg_.seed ^ mix64(i + 1));
    auto draw = [key](std::uint64_t slot, Range r) { return lerp(r.lo, r.hi, hash_unit(key, slot)); };
    Derived d{};
    d.size = draw(1, o.size);
    d.aspect = o.shape == ShapeKind::Rectangle ? draw(2, {0.55, 0.9}) : 1.0;
    d.vx = draw(3, o.vx);
    d.vy = draw(4, o.vy);
    const double r = d.size / 2;
    d.half_w = o.shape == ShapeKind::Blob ? 1.3 * r : r;
    d.half_h = o.shape == ShapeKind::Blob ? 1.3 * r : r * d.aspect;
    d.x0 = w > 2 * d.half_w ? draw(5, {d.half_w, w - d.half_w}) : w / 2;
    d.y0 = h > 2 * d.half_h ? draw(6, {d.half_h, h - d.half_h}) : h / 2;
    d.phase1 = draw(7, {0, 2 * std::numbers::pi});
    d.phase2 = draw(8, {0, 2 * std::numbers::pi});
    derived_.push_back(d);
  }
}

bool SyntheticStream::inside(std::size_t obj, double dx, double dy) const {
  const Derived& d = derived_[obj];
  const double r = d.size / 2;
  switch (cfg_.objects[obj].shape) {
    case ShapeKind::Disc: return dx * dx + dy * dy <= r * r;
    case ShapeKind::Rectangle: return std::abs(dx) <= d.half_w && std::abs(dy) <= d.half_h;
    case ShapeKind::Blob: {
      const double theta = std::atan2(dy, dx);
      const double radius =
          r * (1 + 0.2 * std::sin(3 * theta + d.phase1) + 0.1 * std::sin(5 * theta + d.phase2));
      return dx * dx + dy * dy <= radius * radius;
    }
  }
  return false;
}

void SyntheticStream::object_color(std::size_t obj, std::size_t epoch, double dx, double dy,
                                   std::uint8_t rgb[3]) const {
  const auto& o = cfg_.objects[obj];
  const double class_hue =
      static_cast<double>(o.class_id - 1) / static_cast<double>(cfg_.class_count) + 0.05;
  const std::uint64_t tex = mix64(o.texture_seed ^ mix64(cfg_.seed + epoch * 0x51ED27ULL));
  double hue = class_hue + 0.08 * (hash_unit(tex, 1) - 0.5);
  if (epoch > 0) hue += 0.5 + 0.2 * (hash_unit(tex, 2) - 0.5);
  if (cfg_.flat_colors) {
    hsv_to_rgb(hue, 0.8, 0.9, rgb);
    return;
  }
  const double n = 0.6 * value_noise(tex, dx, dy, 4.0) + 0.4 * value_noise(tex ^ 0xABCDULL, dx, dy, 1.7);
  hsv_to_rgb(hue + 0.05 * (n - 0.5), 0.55 + 0.3 * n, 0.45 + 0.5 * n, rgb);
}

void SyntheticStream::background_color(std::size_t t, double x, double y,
                                       std::uint8_t rgb[3]) const {
  if (cfg_.flat_colors) {
    rgb[0] = rgb[1] = rgb[2] = 110;
    return;
  }
  const auto [px, py] = pan_offset(t);
  const double bx = x + px, by = y + py;
  const std::uint64_t seed = mix64(cfg_.seed ^ 0xBAC6ULL);
  const double n = 0.7 * value_noise(seed, bx, by, 11.0) + 0.3 * value_noise(seed + 1, bx, by, 3.0);
  hsv_to_rgb(0.1 + 0.06 * n, 0.08 + 0.15 * n, 0.25 + 0.5 * n, rgb);
}

std::pair<double, double> SyntheticStream::pan_offset(std::size_t t) const {
  double ox = 0, oy = 0, vx = 0, vy = 0;
  std::size_t since = 0;
  for (const auto& e : cfg_.events) {
    if (e.kind != EventKind::CameraPan) continue;
    if (e.frame > t) break;
    ox += vx * static_cast<double>(e.frame - since);
    oy += vy * static_cast<double>(e.frame - since);
    vx = e.pan_dx;
    vy = e.pan_dy;
    since = e.frame;
  }
  ox += vx * static_cast<double>(t - since);
  oy += vy * static_cast<double>(t - since);
  return {ox, oy};
}

std::vector<ObjectState> SyntheticStream::object_states(std::size_t t) const {
  std::vector<ObjectState> out;
  const auto w = static_cast<double>(cfg_.width), h = static_cast<double>(cfg_.height);
  for (std::size_t i = 0; i < cfg_.objects.size(); ++i) {
    const Derived& d = derived_[i];
    ObjectState s;
    s.index = i;
    s.class_id = cfg_.objects[i].class_id;
    s.visible = true;
    bool first_visibility = true;
    for (const auto& e : cfg_.events) {
      if (e.object != i || e.kind == EventKind::CameraPan) continue;
      if (e.kind == EventKind::AppearanceShift) {
        if (e.frame <= t) ++s.appearance_epoch;
        continue;
      }
      if (first_visibility) {
        s.visible = e.kind == EventKind::Disappear;  // hidden until its first appear event
        first_visibility = false;
      }
      if (e.frame <= t) s.visible = e.kind == EventKind::Appear;
    }
    const auto tt = static_cast<double>(t);
    s.cx = bounce(d.x0, d.vx, tt, d.half_w, w - d.half_w);
    s.cy = bounce(d.y0, d.vy, tt, d.half_h, h - d.half_h);
    out.push_back(s);
  }
  return out;
}

void SyntheticStream::render_into(std::size_t t, Frame* frame, SceneState* scene) const {
  const auto states = object_states(t);
  if (frame) *frame = Frame(cfg_.width, cfg_.height);
  if (scene) {
    scene->frame_index = t;
    scene->objects = states;
    scene->class_map = LabelMap(cfg_.width, cfg_.height);
    scene->owner.assign(cfg_.width * cfg_.height, -1);
  }
  const std::uint64_t grain = mix64(cfg_.seed ^ mix64(t + 0x6A09E667ULL));
  for (std::size_t y = 0; y < cfg_.height; ++y) {
    for (std::size_t x = 0; x < cfg_.width; ++x) {
      const double px = static_cast<double>(x) + 0.5, py = static_cast<double>(y) + 0.5;
      int owner = -1;
      for (std::size_t k = states.size(); k-- > 0;) {
        if (states[k].visible && inside(k, px - states[k].cx, py - states[k].cy)) {
          owner = static_cast<int>(k);
          break;
        }
      }
      const std::size_t p = y * cfg_.width + x;
      if (scene) {
        scene->owner[p] = owner;
        if (owner >= 0) scene->class_map.labels[p] = states[static_cast<std::size_t>(owner)].class_id;
      }
      if (!frame) continue;
      std::uint8_t rgb[3];
      if (owner >= 0) {
        const auto& s = states[static_cast<std::size_t>(owner)];
        object_color(s.index, s.appearance_epoch, px - s.cx, py - s.cy, rgb);
      } else {
        background_color(t, px, py, rgb);
      }
      std::uint8_t* out = frame->pixel(x, y);
      for (int c = 0; c < 3; ++c) {
        int v = rgb[c];
        if (!cfg_.flat_colors) v += static_cast<int>(hash_unit(grain, p, c) * 9.0) - 4;
        out[c] = static_cast<std::uint8_t>(std::clamp(v, 0, 255));
      }
    }
  }
}

Frame SyntheticStream::render(std::size_t t) const {
  Frame f;
  render_into(t, &f, nullptr);
  return f;
}

SceneState SyntheticStream::scene(std::size_t t) const {
  SceneState s;
  render_into(t, nullptr, &s);
  return s;
}

std::pair<Frame, SceneState> SyntheticStream::frame_and_scene(std::size_t t) const {
  std::pair<Frame, SceneState> out;
  render_into(t, &out.first, &out.second);
  return out;
}

std::optional<IndexedFrame> SyntheticFrameSource::next() {
  if (cursor_ >= stream_->config().num_frames) return std::nullopt;
  IndexedFrame f{cursor_, stream_->render(cursor_)};
  ++cursor_;
  return f;
}

TeacherOutput OracleTeacher::instances_from_scene(const SceneState& scene) {
  TeacherOutput out;
  const std::size_t w = scene.class_map.width, h = scene.class_map.height;
  std::vector<std::uint8_t> mask(w * h);
  for (const auto& obj : scene.objects) {
    if (!obj.visible) continue;
    for (std::size_t p = 0; p < mask.size(); ++p) {
      mask[p] = scene.owner[p] == static_cast<int>(obj.index) ? 1 : 0;
    }
    if (auto inst = TeacherInstance::from_frame_mask(obj.class_id, 1.0f, mask, w, h)) {
      out.push_back(std::move(*inst));
    }
  }
  return out;
}

std::optional<TeacherOutput> OracleTeacher::predict(std::size_t frame_index, const Frame&) {
  if (frame_index >= stream_->config().num_frames) return std::nullopt;
  return instances_from_scene(stream_->scene(frame_index));
}

}  // namespace jitstream
