#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "jitstream/metrics.hpp"
#include "support/oracles.hpp"

using namespace jitstream;
using namespace jitstream::testing;

namespace {

LabelMap make_map(std::size_t w, std::size_t h, std::vector<std::uint8_t> v) {
  LabelMap m(w, h);
  m.labels = std::move(v);
  return m;
}

}  // namespace

TEST(MeanIou, HandExample) {
  const auto pred = make_map(2, 2, {0, 1, 1, 1});
  const auto label = make_map(2, 2, {0, 1, 0, 1});
  const auto r = mean_iou(pred, label, false);
  ASSERT_TRUE(r.mean);
  EXPECT_NEAR(*r.mean, (0.5 + 2.0 / 3.0) / 2.0, 1e-12);
  ASSERT_EQ(r.per_class.size(), 2u);
  EXPECT_EQ(r.per_class[0].intersection, 1u);
  EXPECT_EQ(r.per_class[0].union_count, 2u);
  EXPECT_EQ(r.per_class[1].intersection, 2u);
  EXPECT_EQ(r.per_class[1].union_count, 3u);
}

TEST(MeanIou, IdenticalAndDisjointMaps) {
  const auto a = make_map(3, 1, {0, 2, 2});
  EXPECT_DOUBLE_EQ(*mean_iou(a, a, true).mean, 1.0);
  const auto b = make_map(3, 1, {0, 0, 0});
  const auto r = mean_iou(b, a, true);
  EXPECT_DOUBLE_EQ(*r.mean, 0.0);
}

TEST(MeanIou, UndefinedWhenNoClassIncluded) {
  const auto bg = make_map(2, 1, {0, 0});
  EXPECT_FALSE(mean_iou(bg, bg, true).mean.has_value());
  EXPECT_TRUE(mean_iou(bg, bg, false).mean.has_value());
  const auto ignored = make_map(2, 1, {kIgnoreLabel, kIgnoreLabel});
  EXPECT_FALSE(mean_iou(make_map(2, 1, {1, 2}), ignored, false).mean.has_value());
}

TEST(MeanIou, MatchesSetCountingOracle) {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<std::size_t> extent(1, 64);
  for (int seed = 0; seed < 100; ++seed) {
    const std::size_t w = extent(rng), h = extent(rng);
    const auto pred = random_label_map(w, h, 6, rng, 0.0);
    const auto label = random_label_map(w, h, 6, rng, seed % 3 == 0 ? 0.1 : 0.0);
    for (bool exclude : {false, true}) {
      const auto got = mean_iou(pred, label, exclude).mean;
      const auto want = oracle_mean_iou(pred, label, exclude);
      ASSERT_EQ(got.has_value(), want.has_value()) << seed;
      if (got) EXPECT_EQ(*got, *want) << "seed " << seed << " exclude " << exclude;
    }
  }
}

TEST(MeanIou, InvariantUnderConsistentRelabeling) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    auto pred = random_label_map(24, 16, 6, rng, 0.0);
    auto label = random_label_map(24, 16, 6, rng, 0.0);
    std::array<std::uint8_t, 6> perm = {0, 1, 2, 3, 4, 5};
    std::shuffle(perm.begin() + 1, perm.end(), rng);  // background stays background
    auto relabel = [&](LabelMap m) {
      for (auto& v : m.labels) v = perm[v];
      return m;
    };
    for (bool exclude : {false, true}) {
      EXPECT_NEAR(*mean_iou(pred, label, exclude).mean,
                  *mean_iou(relabel(pred), relabel(label), exclude).mean, 1e-12);
    }
  }
}

TEST(ConfusionAccumulator, MergeEqualsSingleAccumulation) {
  std::mt19937_64 rng(3);
  ConfusionAccumulator all, a, b;
  for (int i = 0; i < 6; ++i) {
    const auto p = random_label_map(10, 10, 4, rng, 0.0);
    const auto l = random_label_map(10, 10, 4, rng, 0.05);
    all.add(p, l);
    (i % 2 ? a : b).add(p, l);
  }
  a.merge(b);
  for (std::size_t c = 0; c < 4; ++c) {
    EXPECT_EQ(a.intersection(c), all.intersection(c));
    EXPECT_EQ(a.predicted(c), all.predicted(c));
    EXPECT_EQ(a.labelled(c), all.labelled(c));
    EXPECT_LE(all.intersection(c), std::min(all.predicted(c), all.labelled(c)));
  }
  EXPECT_EQ(*a.mean_iou(true).mean, *all.mean_iou(true).mean);
}

TEST(ConfusionAccumulator, RejectsShapeMismatch) {
  ConfusionAccumulator acc;
  EXPECT_THROW(acc.add(LabelMap(2, 2), LabelMap(2, 3)), std::invalid_argument);
}

TEST(IntervalSeries, WindowArithmetic) {
  std::vector<double> v(10);
  std::iota(v.begin(), v.end(), 1.0);
  EXPECT_EQ(interval_series(v, 1.0, 4.0), (std::vector<double>{2.5, 6.5, 9.5}));

  const std::vector<double> flat(60, 0.7);
  const auto one = interval_series(flat, 2.0, 30.0);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_DOUBLE_EQ(one[0], 0.7);

  const auto windows = interval_series(std::vector<double>(95, 0.25), 30.0, 1.0);
  EXPECT_EQ(windows, (std::vector<double>{0.25, 0.25, 0.25, 0.25}));
  EXPECT_TRUE(interval_series({}, 30.0, 30.0).empty());
}

TEST(IntervalSeries, SkipsUndefinedFrames) {
  const double nan = std::nan("");
  const auto s = interval_series(std::vector<double>{1.0, nan, 3.0, nan, nan}, 1.0, 3.0);
  ASSERT_EQ(s.size(), 2u);
  EXPECT_DOUBLE_EQ(s[0], 2.0);
  EXPECT_TRUE(std::isnan(s[1]));
}

TEST(Speedup, CostFormula) {
  const auto r = speedup({1000, 16, 100}, CostModel{});
  EXPECT_NEAR(r.total_ms, 14800.0, 1e-9);
  EXPECT_NEAR(r.speedup, 300000.0 / 14800.0, 1e-6);
  EXPECT_NEAR(r.speedup, 20.27, 0.005);
  EXPECT_NEAR(r.teacher_fraction, 0.016, 1e-12);

  const auto every = speedup({500, 500, 0}, CostModel{});
  EXPECT_NEAR(every.speedup, 300.0 / 307.0, 1e-12);
  EXPECT_LT(every.speedup, 1.0);
}

TEST(Speedup, StrictlyDecreasesWithMoreWork) {
  const CostModel cost;
  double prev = speedup({2000, 10, 0}, cost).speedup;
  for (std::uint64_t n = 11; n < 200; n += 7) {
    const double s = speedup({2000, n, 0}, cost).speedup;
    EXPECT_LT(s, prev);
    prev = s;
  }
  prev = speedup({2000, 40, 0}, cost).speedup;
  for (std::uint64_t u = 1; u < 400; u += 13) {
    const double s = speedup({2000, 40, u}, cost).speedup;
    EXPECT_LT(s, prev);
    prev = s;
  }
}

TEST(Speedup, RejectsEmptyStreamAndNegativeCosts) {
  EXPECT_THROW(speedup({0, 0, 0}, CostModel{}), std::invalid_argument);
  CostModel bad;
  bad.update_ms = -1.0;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
}
