#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "jitstream/container.hpp"
#include "jitstream/distill.hpp"
#include "jitstream/noisy_teacher.hpp"
#include "jitstream/recorded_teacher.hpp"
#include "jitstream/synthetic.hpp"
#include "support/stubs.hpp"
#include "support/tempdir.hpp"

using namespace jitstream;
using jitstream::testing::TempDir;

namespace {

SyntheticStreamConfig single_disc(double vx, double vy, double size = 20.0) {
  SyntheticStreamConfig cfg;
  cfg.width = 96;
  cfg.height = 64;
  cfg.num_frames = 300;
  cfg.class_count = 1;
  cfg.seed = 5;
  SyntheticObject disc;
  disc.class_id = 1;
  disc.shape = ShapeKind::Disc;
  disc.size = {size, size};
  disc.vx = {vx, vx};
  disc.vy = {vy, vy};
  disc.texture_seed = 3;
  cfg.objects = {disc};
  return cfg;
}

std::shared_ptr<const SyntheticStream> standard() {
  return std::make_shared<const SyntheticStream>(standard_stream_config());
}

double mask_iou(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b) {
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    inter += a[i] && b[i];
    uni += a[i] || b[i];
  }
  return uni ? static_cast<double>(inter) / static_cast<double>(uni) : 1.0;
}

std::vector<std::uint8_t> file_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST(SyntheticStream, IdenticalConfigsRenderIdenticalFrames) {
  const SyntheticStream a(standard_stream_config()), b(standard_stream_config());
  for (std::size_t t : {0u, 1u, 399u, 400u, 999u, 1000u, 1999u}) {
    auto [fa, sa] = a.frame_and_scene(t);
    auto [fb, sb] = b.frame_and_scene(t);
    EXPECT_EQ(fa, fb) << t;
    EXPECT_EQ(sa.class_map, sb.class_map) << t;
    EXPECT_EQ(sa.owner, sb.owner) << t;
    EXPECT_EQ(fa, a.render(t));
    EXPECT_EQ(sa.class_map, a.scene(t).class_map);
  }
  auto other = standard_stream_config();
  other.seed += 1;
  EXPECT_NE(SyntheticStream(other).render(10), a.render(10));
}

TEST(SyntheticStream, DiscMovesOnePixelPerFrameUntilBounce) {
  const SyntheticStream s(single_disc(1.0, 0.0));
  const double right = 96.0 - 10.0;
  double prev = s.scene(0).objects[0].cx;
  bool bounced = false;
  for (std::size_t t = 1; t < 200; ++t) {
    const double cx = s.scene(t).objects[0].cx;
    EXPECT_EQ(s.scene(t).objects[0].cy, s.scene(0).objects[0].cy);
    if (std::abs(cx - prev - 1.0) > 1e-9) {
      EXPECT_GT(prev + 1.0, right - 1e-9) << "direction changed away from the border at " << t;
      EXPECT_LE(cx, right + 1e-9);
      bounced = true;
      break;
    }
    prev = cx;
  }
  EXPECT_TRUE(bounced);
}

TEST(SyntheticStream, AppearEventTakesEffectOnItsFrame) {
  auto cfg = single_disc(0.5, 0.3);
  cfg.class_count = 2;
  cfg.num_frames = 600;
  SyntheticObject square = cfg.objects[0];
  square.class_id = 2;
  square.shape = ShapeKind::Rectangle;
  cfg.objects.push_back(square);
  cfg.events.push_back({500, EventKind::Appear, 1, 0.0, 0.0});
  const SyntheticStream s(cfg);
  auto has_class = [](const LabelMap& m, std::uint8_t c) {
    return std::find(m.labels.begin(), m.labels.end(), c) != m.labels.end();
  };
  EXPECT_FALSE(has_class(s.scene(0).class_map, 2));
  EXPECT_FALSE(has_class(s.scene(499).class_map, 2));
  EXPECT_TRUE(has_class(s.scene(500).class_map, 2));
  EXPECT_TRUE(has_class(s.scene(599).class_map, 2));
}

TEST(SyntheticStream, AppearanceShiftChangesPixelsButNotGeometry) {
  auto cfg = single_disc(0.0, 0.0);
  cfg.events.push_back({100, EventKind::AppearanceShift, 0, 0.0, 0.0});
  const SyntheticStream s(cfg);
  auto [f99, s99] = s.frame_and_scene(99);
  auto [f100, s100] = s.frame_and_scene(100);
  EXPECT_EQ(s99.class_map, s100.class_map);
  std::size_t changed = 0;
  for (std::size_t p = 0; p < s99.owner.size(); ++p) {
    if (s99.owner[p] != 0) continue;
    const auto* a = &f99.rgb[p * 3];
    const auto* b = &f100.rgb[p * 3];
    changed += std::abs(a[0] - b[0]) + std::abs(a[1] - b[1]) + std::abs(a[2] - b[2]) > 60;
  }
  EXPECT_GT(changed, 200u);
}

TEST(SyntheticStream, RejectsInvalidConfigs) {
  auto c = single_disc(1, 0);
  c.objects[0].class_id = 2;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = single_disc(1, 0, 0.0);
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = single_disc(1, 0);
  c.events = {{10, EventKind::Appear, 0, 0, 0}, {10, EventKind::Disappear, 0, 0, 0}};
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c.events = {{300, EventKind::Appear, 0, 0, 0}};
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c.events = {{10, EventKind::Appear, 4, 0, 0}};
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(SyntheticConfig, FormatParseRoundTrip) {
  const auto cfg = standard_stream_config();
  const std::string text = format_synthetic_config(cfg);
  const auto back = parse_synthetic_config(KeyValueFile::parse(text));
  EXPECT_EQ(format_synthetic_config(back), text);
  EXPECT_EQ(back.objects.size(), 4u);
  EXPECT_EQ(back.events.size(), 5u);
  EXPECT_EQ(back.events[2].kind, EventKind::AppearanceShift);
  EXPECT_EQ(back.events[2].frame, 1000u);
  EXPECT_EQ(SyntheticStream(back).render(1234), SyntheticStream(cfg).render(1234));
}

TEST(SyntheticConfig, BundledFileMatchesBuiltIn) {
  const auto file = load_synthetic_config(std::filesystem::path(JITSTREAM_CONFIG_DIR) /
                                          "standard_stream.cfg");
  EXPECT_EQ(format_synthetic_config(file), format_synthetic_config(standard_stream_config()));
}

TEST(SyntheticConfig, ReportsBadInputWithLocation) {
  const std::string base = "width = 32\nheight = 32\nnum_frames = 10\nclass_count = 1\n";
  EXPECT_THROW(parse_synthetic_config(KeyValueFile::parse(
                   base + "object = class=1 shape=hexagon size=4:6 vx=0:0 vy=0:0\n")),
               ConfigError);
  EXPECT_THROW(parse_synthetic_config(KeyValueFile::parse(
                   base + "object = class=3 shape=disc size=4:6 vx=0:0 vy=0:0\n")),
               ConfigError);
  try {
    parse_synthetic_config(
        KeyValueFile::parse(base + "object = class=1 shape=disc size=4:6 speed=2\n", "s.cfg"));
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("s.cfg:5"), std::string::npos) << e.what();
  }
}

TEST(OracleTeacher, EmptySceneGivesNoInstances) {
  auto cfg = single_disc(1, 0);
  cfg.events.push_back({0, EventKind::Disappear, 0, 0, 0});
  auto stream = std::make_shared<const SyntheticStream>(cfg);
  OracleTeacher teacher(stream);
  const auto out = teacher.predict(5, stream->render(5));
  ASSERT_TRUE(out);
  EXPECT_TRUE(out->empty());
  EXPECT_FALSE(teacher.predict(300, Frame(96, 64)).has_value());
}

TEST(OracleTeacher, MasksEqualRenderedCoverage) {
  auto stream = standard();
  OracleTeacher teacher(stream);
  const std::size_t w = 96, h = 96;
  for (std::size_t t = 0; t < 2000; t += 37) {
    const SceneState scene = stream->scene(t);
    const auto out = teacher.predict(t, stream->render(t));
    ASSERT_TRUE(out);
    std::size_t next = 0;
    for (const auto& obj : scene.objects) {
      std::vector<std::uint8_t> coverage(w * h);
      for (std::size_t p = 0; p < w * h; ++p)
        coverage[p] = scene.owner[p] == static_cast<int>(obj.index);
      if (std::count(coverage.begin(), coverage.end(), 1) == 0) continue;
      ASSERT_LT(next, out->size());
      const auto& inst = (*out)[next++];
      EXPECT_EQ(inst.class_id, obj.class_id);
      EXPECT_EQ(inst.confidence, 1.0f);
      EXPECT_EQ(inst.frame_mask(w, h), coverage) << "frame " << t << " object " << obj.index;
      // Tight box: every edge row and column holds a mask pixel.
      int top = 0, left = 0;
      for (int x = inst.box.x0; x < inst.box.x1; ++x) top += inst.covers(x, inst.box.y0);
      for (int y = inst.box.y0; y < inst.box.y1; ++y) left += inst.covers(inst.box.x0, y);
      EXPECT_GT(top, 0);
      EXPECT_GT(left, 0);
    }
    EXPECT_EQ(next, out->size());
  }
}

TEST(OracleTeacher, RasterizedOutputReproducesGroundTruth) {
  auto stream = standard();
  OracleTeacher teacher(stream);
  for (std::size_t t = 0; t < 2000; t += 13) {
    const auto [frame, scene] = stream->frame_and_scene(t);
    const auto out = teacher.predict(t, frame);
    EXPECT_EQ(rasterize_teacher(*out, 1.0, 96, 96), scene.class_map) << t;
  }
}

TEST(NoisyTeacher, ZeroNoiseIsIdentity) {
  auto stream = standard();
  auto base = std::make_shared<OracleTeacher>(stream);
  NoisyTeacher noisy(base, TeacherNoise{}, 9);
  for (std::size_t t = 0; t < 2000; t += 101) {
    const Frame f = stream->render(t);
    EXPECT_EQ(*noisy.predict(t, f), *base->predict(t, f));
  }
}

TEST(NoisyTeacher, DropRateWithinBinomialBounds) {
  auto base = std::make_shared<jitstream::testing::UniformTeacher>();
  for (double p : {0.3, 0.99}) {
    NoisyTeacher noisy(base, TeacherNoise{0, 0.0, p}, 17);
    const std::size_t n = 5000;
    std::size_t dropped = 0;
    const Frame f(4, 4);
    for (std::size_t t = 0; t < n; ++t) dropped += noisy.predict(t, f)->empty();
    const double mean = p * n, sigma = std::sqrt(n * p * (1 - p));
    EXPECT_NEAR(static_cast<double>(dropped), mean, 3 * sigma) << p;
  }
}

TEST(NoisyTeacher, DeterministicPerFrameAndSeed) {
  auto stream = standard();
  auto base = std::make_shared<OracleTeacher>(stream);
  const TeacherNoise noise{2, 0.2, 0.1};
  NoisyTeacher a(base, noise, 4), b(base, noise, 4);
  const Frame f = stream->render(321);
  const auto first = a.predict(321, f);
  a.predict(12, stream->render(12));
  EXPECT_EQ(*a.predict(321, f), *first);
  EXPECT_EQ(*b.predict(321, f), *first);
  for (const auto& inst : *first) {
    EXPECT_GE(inst.confidence, 0.0f);
    EXPECT_LE(inst.confidence, 1.0f);
  }
}

TEST(NoisyTeacher, DiscJitterStaysInAnalyticBand) {
  auto stream = std::make_shared<const SyntheticStream>(single_disc(0.7, 0.4, 20.0));
  auto base = std::make_shared<OracleTeacher>(stream);
  NoisyTeacher noisy(base, TeacherNoise{2, 0.0, 0.0}, 21);
  const double r = 10.0, lo = (r - 2) * (r - 2) / ((r + 2) * (r + 2));
  std::set<double> seen;
  for (std::size_t t = 0; t < 200; ++t) {
    const Frame f = stream->render(t);
    const auto clean = base->predict(t, f);
    const auto jittered = noisy.predict(t, f);
    ASSERT_EQ(jittered->size(), 1u);
    const double iou = mask_iou(clean->front().frame_mask(96, 64),
                                jittered->front().frame_mask(96, 64));
    EXPECT_GE(iou, lo);
    EXPECT_LE(iou, 1.0);
    seen.insert(std::round(iou * 100) / 100);
  }
  EXPECT_GT(seen.size(), 3u);  // several distinct jitter radii were drawn
}

TEST(NoisyTeacher, RejectsBadParameters) {
  EXPECT_THROW((TeacherNoise{-1, 0, 0}.validate()), std::invalid_argument);
  EXPECT_THROW((TeacherNoise{0, 0, 1.0}.validate()), std::invalid_argument);
  EXPECT_THROW((TeacherNoise{0, -0.1, 0}.validate()), std::invalid_argument);
}

TEST(MorphDisc, DilatesAndErodesPoint) {
  std::vector<std::uint8_t> dot(81, 0);
  dot[4 * 9 + 4] = 1;
  const auto grown = morph_disc(dot, 9, 9, 2);
  EXPECT_EQ(std::count(grown.begin(), grown.end(), 1), 13);  // lattice points with x²+y² <= 4
  EXPECT_EQ(morph_disc(grown, 9, 9, -2), dot);
  const std::vector<std::uint8_t> full(81, 1);
  EXPECT_EQ(morph_disc(full, 9, 9, -3), full);
}

TEST(Container, RoundTripIsByteIdentical) {
  TempDir dir;
  std::vector<Frame> frames;
  std::mt19937_64 rng(8);
  for (int i = 0; i < 10; ++i) {
    Frame f(32, 32);
    for (auto& v : f.rgb) v = static_cast<std::uint8_t>(rng());
    frames.push_back(f);
  }
  {
    ContainerWriter w(dir / "a.lvss", 32, 32, 3);
    for (const auto& f : frames) w.write(f);
  }
  ContainerReader r(dir / "a.lvss");
  EXPECT_EQ(r.header().frame_count, 10u);
  {
    ContainerWriter w(dir / "b.lvss", 32, 32, 3);
    for (std::size_t i = 0; i < 10; ++i) {
      EXPECT_EQ(r.read_frame(i), frames[i]);
      w.write(r.read(i));
    }
  }
  EXPECT_EQ(file_bytes(dir / "a.lvss"), file_bytes(dir / "b.lvss"));
  EXPECT_EQ(file_bytes(dir / "a.lvss").size(), kContainerHeaderBytes + 10 * 32 * 32 * 3);

  ContainerFrameSource src(dir / "a.lvss");
  std::size_t n = 0;
  while (auto f = src.next()) EXPECT_EQ(f->index, n++);
  EXPECT_EQ(n, 10u);
}

TEST(Container, RejectsTruncatedPayload) {
  TempDir dir;
  {
    ContainerWriter w(dir / "a.lvss", 32, 32, 3);
    for (int i = 0; i < 10; ++i) w.write(Frame(32, 32));
  }
  std::filesystem::resize_file(dir / "a.lvss", kContainerHeaderBytes + 9 * 32 * 32 * 3);
  try {
    ContainerReader r(dir / "a.lvss");
    FAIL() << "expected ContainerError";
  } catch (const ContainerError& e) {
    EXPECT_NE(std::string(e.what()).find("offset"), std::string::npos) << e.what();
  }
  std::filesystem::resize_file(dir / "a.lvss", kContainerHeaderBytes + 9 * 32 * 32 * 3 + 5);
  EXPECT_THROW(ContainerReader(dir / "a.lvss"), ContainerError);
}

TEST(Container, RejectsBadMagicAndTrailingBytes) {
  TempDir dir;
  {
    ContainerWriter w(dir / "a.lvss", 4, 4, 1);
    w.write(LabelMap(4, 4));
  }
  auto bytes = file_bytes(dir / "a.lvss");
  bytes.push_back(0);
  std::ofstream(dir / "trail.lvss", std::ios::binary)
      .write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  EXPECT_THROW(ContainerReader(dir / "trail.lvss"), ContainerError);
  bytes.pop_back();
  bytes[0] = 'X';
  std::ofstream(dir / "magic.lvss", std::ios::binary)
      .write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  EXPECT_THROW(ContainerReader(dir / "magic.lvss"), ContainerError);
  EXPECT_THROW(ContainerFrameSource(dir / "a.lvss"), ContainerError);  // one channel
}

TEST(Container, LabelMapsKeepIgnoreLabel) {
  TempDir dir;
  LabelMap m(5, 3, 2);
  m.at(1, 1) = kIgnoreLabel;
  m.at(4, 2) = 0;
  {
    ContainerWriter w(dir / "l.lvss", 5, 3, 1);
    w.write(m);
  }
  ContainerReader r(dir / "l.lvss");
  const LabelMap back = r.read_labels(0);
  EXPECT_EQ(back, m);
  EXPECT_EQ(back.at(1, 1), 255);
}

TEST(Rle, RoundTripsAndStartsWithZeroRun) {
  EXPECT_EQ(encode_rle(std::vector<std::uint8_t>{1, 1, 0}), (std::vector<std::uint32_t>{0, 2, 1}));
  EXPECT_EQ(encode_rle(std::vector<std::uint8_t>{0, 0, 1}), (std::vector<std::uint32_t>{2, 1}));
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::uint8_t> mask(1 + rng() % 200);
    for (auto& v : mask) v = (rng() % 4) == 0;
    EXPECT_EQ(decode_rle(encode_rle(mask)), mask);
  }
}

TEST(RecordedTeacher, BoxAndFullFrameMasksAgree) {
  // A 2x2 square at (1,1) in a 4x3 frame.
  std::istringstream in(
      R"({"frame": 0, "instances": [{"class": 2, "conf": 0.9, "bbox": [1, 1, 3, 3], "rle": [0, 4]}]})"
      "\n\n"
      R"({"frame": 3, "instances": [{"class": 2, "conf": 0.9, "bbox": [1, 1, 3, 3], "rle": [5, 2, 2, 2, 1]}]})"
      "\n");
  auto teacher = RecordedTeacher::parse(in, 4, 3, "t.jsonl");
  const Frame f(4, 3);
  const auto a = teacher.predict(0, f), b = teacher.predict(3, f);
  ASSERT_TRUE(a && b);
  EXPECT_EQ(*a, *b);
  EXPECT_EQ(a->front().area(), 4u);
  EXPECT_FALSE(teacher.predict(1, f).has_value());
}

TEST(RecordedTeacher, ClampsToFrameAndDropsEmpty) {
  std::istringstream in(
      R"({"frame": 0, "instances": [{"class": 1, "conf": 1.0, "bbox": [2, 0, 6, 1], "rle": [0, 4]},)"
      R"( {"class": 1, "conf": 1.0, "bbox": [9, 9, 10, 10], "rle": [0, 1]}]})");
  auto teacher = RecordedTeacher::parse(in, 4, 3, "t.jsonl");
  const auto out = teacher.predict(0, Frame(4, 3));
  ASSERT_EQ(out->size(), 1u);
  EXPECT_EQ(out->front().box, (BoundingBox{2, 0, 4, 1}));
}

TEST(RecordedTeacher, RejectsMalformedLinesWithLocation) {
  auto parse = [](const std::string& text) {
    std::istringstream in(text);
    return RecordedTeacher::parse(in, 4, 4, "t.jsonl");
  };
  const std::string ok = R"({"frame": 0, "instances": []})";
  EXPECT_NO_THROW(parse(ok));
  try {
    parse(ok + "\n" + ok);
    FAIL() << "expected duplicate frame error";
  } catch (const RecordedTeacherError& e) {
    EXPECT_NE(std::string(e.what()).find("t.jsonl:2"), std::string::npos) << e.what();
  }
  EXPECT_THROW(parse(R"({"frame": 0, "instances": [{"class": 1, "conf": 1.5, "bbox": [0,0,1,1], "rle": [0,1]}]})"),
               RecordedTeacherError);
  EXPECT_THROW(parse(R"({"frame": 0, "instances": [{"class": 1, "conf": 1, "bbox": [0,0,2,2], "rle": [0,3]}]})"),
               RecordedTeacherError);
  EXPECT_THROW(parse(R"({"frame": 0, "instances": [{"class": 1, "conf": 1, "bbox": [0,0,1], "rle": [0,1]}]})"),
               RecordedTeacherError);
  EXPECT_THROW(parse("{not json"), RecordedTeacherError);
}

TEST(RecordedTeacher, WriterOutputLoadsBack) {
  TempDir dir;
  auto stream = standard();
  OracleTeacher oracle(stream);
  {
    RecordedTeacherWriter w(dir / "t.jsonl");
    for (std::size_t t = 0; t < 40; t += 4) w.append(t, *oracle.predict(t, stream->render(t)));
  }
  auto loaded = RecordedTeacher::load(dir / "t.jsonl", 96, 96);
  EXPECT_EQ(loaded.frames().size(), 10u);
  for (std::size_t t = 0; t < 40; t += 4) {
    const Frame f = stream->render(t);
    EXPECT_EQ(*loaded.predict(t, f), *oracle.predict(t, f)) << t;
  }
}
