#include <gtest/gtest.h>

#include <sstream>

#include "jitstream/runner.hpp"
#include "jitstream/synthetic.hpp"
#include "support/tempdir.hpp"

using namespace jitstream;
using jitstream::testing::TempDir;

namespace {

double mean_iou_over_stream(Student& student, const SyntheticStream& stream) {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t t = 0; t < stream.config().num_frames; ++t) {
    auto [frame, scene] = stream.frame_and_scene(t);
    student.begin_frame(t);
    if (auto m = mean_iou(student.predict(frame), scene.class_map, true).mean) {
      sum += *m;
      ++n;
    }
  }
  return sum / static_cast<double>(n);
}

}  // namespace

// Both arms start from the same weights on a 200-frame scene with no motion.
// The threshold is raised so online training is not capped at the default
// pass mark, and the offline arm gets one epoch over every fifth frame
// (40 steps), a budget close to what the online loop spends.
TEST(EndToEnd, OfflineOracleAndOnlineAgreeOnStaticScene) {
  auto cfg = standard_stream_config();
  cfg.num_frames = 200;
  cfg.events.clear();
  for (auto& o : cfg.objects) o.vx = o.vy = {0.0, 0.0};
  auto stream = std::make_shared<const SyntheticStream>(cfg);
  DistillConfig d;
  d.a_thresh = 0.95;

  NetworkStudent online(std::make_shared<Network<float>>(ArchConfig{}, 1));
  SyntheticFrameSource src(stream);
  OracleTeacher teacher(stream);
  StreamOptions opt;
  opt.ground_truth = [&](std::size_t t) -> std::optional<LabelMap> {
    return stream->scene(t).class_map;
  };
  const auto report = process_stream(src, teacher, online, d, opt);
  const double online_iou = *mean_frame_iou(report, 0, SIZE_MAX, true);

  NetworkStudent offline(std::make_shared<Network<float>>(ArchConfig{}, 1));
  src.rewind();
  const auto data = sample_every_kth(src, teacher, 5, d);
  ASSERT_EQ(data.size(), 40u);
  OfflineTrainOptions train;
  train.epochs = 1;
  offline_oracle_train(offline, data, train);
  const double offline_iou = mean_iou_over_stream(offline, *stream);

  RecordProperty("online_mean_iou", std::to_string(online_iou));
  RecordProperty("offline_mean_iou", std::to_string(offline_iou));
  EXPECT_GT(online_iou, 0.8);
  EXPECT_NEAR(offline_iou, online_iou, 0.05);
}

TEST(EndToEnd, PretrainedStudentNeedsFewerUpdates) {
  TempDir dir;
  PretrainConfig pre;
  pre.corpus.scenes = 200;
  pre.train.epochs = 2;
  execute_pretrain(pre, dir / "w.jitw");

  std::ostringstream text;
  text << "synthetic = standard\nmax_frames = 500\nout_dir = " << dir.path().string() << "\n";
  RunConfig random = RunConfig::parse(KeyValueFile::parse(text.str()));
  RunConfig warm = random;
  warm.init_snapshot = dir / "w.jitw";
  RunOptions opt;
  opt.write_files = false;
  const auto a = execute_run(random, opt).summary;
  const auto b = execute_run(warm, opt).summary;
  RecordProperty("random_updates", std::to_string(a.counters.updates));
  RecordProperty("pretrained_updates", std::to_string(b.counters.updates));
  EXPECT_LT(b.counters.updates, a.counters.updates);
  EXPECT_LE(b.counters.teacher_invocations, a.counters.teacher_invocations);
  EXPECT_GT(*b.mean_iou, *a.mean_iou);
}
