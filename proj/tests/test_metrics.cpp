#include "gdr/metrics.hpp"

#include "metric_oracles.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace gdr::metrics {
namespace {

using testing::brute_force_miou;
using testing::brute_iou;
using testing::pair_counting_ari;

SegmentationPair pair_of(const std::vector<int32_t>& pred, const std::vector<int32_t>& truth) {
  return {std::span<const int32_t>(pred), std::span<const int32_t>(truth)};
}

std::vector<int32_t> random_map(std::mt19937& rng, size_t n, int labels) {
  std::vector<int32_t> m(n);
  for (auto& v : m) v = static_cast<int32_t>(rng() % static_cast<unsigned>(labels));
  return m;
}

std::vector<int32_t> relabel(const std::vector<int32_t>& m, std::mt19937& rng) {
  std::vector<int32_t> perm(64);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<int32_t> out(m.size());
  for (size_t i = 0; i < m.size(); ++i) out[i] = perm[static_cast<size_t>(m[i])];
  return out;
}

TEST(Ari, PerfectUpToRelabeling) {
  std::mt19937 rng(1);
  auto truth = random_map(rng, 64, 5);
  auto pred = relabel(truth, rng);
  EXPECT_NEAR(ari(pair_of(pred, truth), false).value, 1.0, 1e-12);
}

TEST(Ari, ConstantPredictionIsZero) {
  std::vector<int32_t> truth{0, 0, 1, 1, 2, 2, 2, 0, 1};
  std::vector<int32_t> pred(truth.size(), 3);
  EXPECT_NEAR(ari(pair_of(pred, truth), false).value, 0.0, 1e-12);
}

TEST(Ari, TwoByTwoToy) {
  std::vector<int32_t> truth{0, 0, 1, 1};
  std::vector<int32_t> pred{0, 1, 0, 1};
  const double oracle = pair_counting_ari(pred, truth);
  EXPECT_DOUBLE_EQ(oracle, -0.5);
  EXPECT_NEAR(ari(pair_of(pred, truth), false).value, oracle, 1e-12);
}

TEST(Ari, MatchesPairCountingOracle) {
  std::mt19937 rng(2);
  for (int trial = 0; trial < 30; ++trial) {
    auto truth = random_map(rng, 50, 2 + trial % 4);
    auto pred = random_map(rng, 50, 2 + trial % 5);
    EXPECT_NEAR(ari(pair_of(pred, truth), false).value, pair_counting_ari(pred, truth), 1e-10);
  }
}

TEST(Ari, ForegroundOnly) {
  std::vector<int32_t> truth{0, 0, 0, 0, 1, 1, 2, 2};
  std::vector<int32_t> pred{5, 6, 7, 8, 1, 1, 2, 2};
  EXPECT_NEAR(ari(pair_of(pred, truth), true).value, 1.0, 1e-12);
  EXPECT_LT(ari(pair_of(pred, truth), false).value, 1.0);

  std::vector<int32_t> empty(8, 0);
  auto r = ari(pair_of(pred, empty), true);
  EXPECT_EQ(r.value, 0.0);
  EXPECT_TRUE(r.degenerate);
}

TEST(Ari, AllForegroundMatchesFull) {
  std::mt19937 rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    auto truth = random_map(rng, 40, 4);
    for (auto& t : truth) t += 1;
    auto pred = random_map(rng, 40, 3);
    EXPECT_DOUBLE_EQ(ari(pair_of(pred, truth), true).value, ari(pair_of(pred, truth), false).value);
  }
}

TEST(Metrics, RejectInvalidPairs) {
  std::vector<int32_t> a{0, 1}, b{0, 1, 2}, neg{0, -1};
  EXPECT_THROW(ari(pair_of(a, b), false), std::invalid_argument);
  EXPECT_THROW(mbo(pair_of(neg, a)), std::invalid_argument);
}

TEST(Mbo, Perfect) {
  std::vector<int32_t> truth{0, 1, 1, 2, 2, 0};
  std::vector<int32_t> pred{4, 7, 7, 9, 9, 4};
  EXPECT_NEAR(mbo(pair_of(pred, truth)).value, 1.0, 1e-12);
  EXPECT_NEAR(miou(pair_of(pred, truth)).value, 1.0, 1e-12);
}

TEST(Mbo, SegmentCoveringHalfOfTwoObjects) {
  // 4x8 canvas, objects in columns 0-1 and 4-5; segment 1 is the top half of both.
  const int H = 4, W = 8;
  std::vector<int32_t> truth(H * W, 0), pred(H * W, 0);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      const int i = y * W + x;
      if (x < 2) truth[i] = 1;
      if (x >= 4 && x < 6) truth[i] = 2;
      if (truth[i] != 0 && y < 2) pred[i] = 1;
    }
  }
  double expected = 0.0;
  for (int32_t t : {1, 2}) expected += std::max(brute_iou(pred, 0, truth, t), brute_iou(pred, 1, truth, t));
  expected /= 2.0;
  EXPECT_NEAR(mbo(pair_of(pred, truth)).value, expected, 1e-12);
  EXPECT_NEAR(expected, 1.0 / 3.0, 1e-12);
}

TEST(Mbo, ShiftedSquare) {
  const int S = 20;
  std::vector<int32_t> truth(S * S, 0), pred(S * S, 0);
  for (int y = 5; y < 15; ++y)
    for (int x = 5; x < 15; ++x) truth[y * S + x] = 1;
  for (int y = 6; y < 16; ++y)
    for (int x = 6; x < 16; ++x) pred[y * S + x] = 1;
  EXPECT_NEAR(mbo(pair_of(pred, truth)).value, 81.0 / 119.0, 1e-12);
  EXPECT_NEAR(miou(pair_of(pred, truth)).value, 81.0 / 119.0, 1e-12);
}

TEST(Mbo, NoForegroundIsDegenerate) {
  std::vector<int32_t> truth(6, 0), pred{0, 1, 2, 0, 1, 2};
  auto b = mbo(pair_of(pred, truth));
  auto m = miou(pair_of(pred, truth));
  EXPECT_TRUE(b.degenerate);
  EXPECT_TRUE(m.degenerate);
  EXPECT_EQ(b.value, 0.0);
  EXPECT_EQ(m.value, 0.0);
}

TEST(Miou, SplitObjectScoresHalf) {
  // one object of 8 pixels split into two predicted halves, background separate
  std::vector<int32_t> truth{0, 0, 1, 1, 1, 1, 1, 1, 1, 1};
  std::vector<int32_t> pred{0, 0, 1, 1, 1, 1, 2, 2, 2, 2};
  EXPECT_NEAR(miou(pair_of(pred, truth)).value, 0.5, 1e-12);
}

TEST(Miou, MatchesExhaustiveEnumeration) {
  std::mt19937 rng(4);
  for (int trial = 0; trial < 25; ++trial) {
    auto truth = random_map(rng, 36, 4);  // background + 3 objects
    auto pred = random_map(rng, 36, 3);
    EXPECT_NEAR(miou(pair_of(pred, truth)).value, brute_force_miou(pred, truth), 1e-12);
  }
}

TEST(Hungarian, MatchesExhaustiveUpToFive) {
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const size_t rows = 1 + rng() % 5, cols = 1 + rng() % 5;
    std::vector<std::vector<double>> score(rows, std::vector<double>(cols));
    for (auto& r : score)
      for (auto& v : r) v = u(rng);
    auto match = max_weight_assignment(score);
    double got = 0.0;
    std::vector<int> used(cols, 0);
    for (size_t r = 0; r < rows; ++r) {
      if (match[r] < 0) continue;
      EXPECT_EQ(used[static_cast<size_t>(match[r])]++, 0);
      got += score[r][static_cast<size_t>(match[r])];
    }
    EXPECT_EQ(static_cast<size_t>(std::count_if(match.begin(), match.end(), [](int m) { return m >= 0; })),
              std::min(rows, cols));
    const double best = testing::brute_force_assignment(score);
    EXPECT_NEAR(got, best, 1e-12);
  }
}

TEST(Metrics, PermutationInvarianceProperty) {
  std::mt19937 rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    auto truth = random_map(rng, 49, 4);
    auto pred = random_map(rng, 49, 4);
    auto base = evaluate(pair_of(pred, truth));
    auto pred2 = relabel(pred, rng);
    // truth relabeling must keep background at 0
    std::vector<int32_t> truth2(truth.size());
    for (size_t i = 0; i < truth.size(); ++i) truth2[i] = truth[i] == 0 ? 0 : 10 + (4 - truth[i]);
    auto moved = evaluate(pair_of(pred2, truth2));
    EXPECT_NEAR(base.ari, moved.ari, 1e-12);
    EXPECT_NEAR(base.ari_fg, moved.ari_fg, 1e-12);
    EXPECT_NEAR(base.mbo, moved.mbo, 1e-12);
    EXPECT_NEAR(base.miou, moved.miou, 1e-12);
    for (double v : {base.mbo, base.miou}) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(ScoreAccumulator, AveragesPerImage) {
  ScoreAccumulator acc;
  acc.add({1.0, 0.5, 0.2, 0.4, 0});
  acc.add({0.0, 0.5, 0.4, 0.2, 1});
  auto m = acc.mean();
  EXPECT_DOUBLE_EQ(m.ari, 0.5);
  EXPECT_DOUBLE_EQ(m.mbo, 0.3);
  EXPECT_EQ(m.degenerate, 1);
  EXPECT_EQ(acc.count(), 2);
}

TEST(Usage, ColorShapeWorldReuse) {
  // Ideal attribute discretizer on uniformly drawn (color, shape) objects.
  std::mt19937 rng(7);
  UsageAccumulator acc({2, 3});
  std::vector<int64_t> tuples;
  for (int i = 0; i < 60000; ++i) {
    tuples.push_back(static_cast<int64_t>(rng() % 2));
    tuples.push_back(static_cast<int64_t>(rng() % 3));
  }
  acc.add(tuples);
  auto s = acc.result();
  for (double f : s.frequency[0]) EXPECT_NEAR(f, 1.0 / 2.0, 0.01);
  for (double f : s.frequency[1]) EXPECT_NEAR(f, 1.0 / 3.0, 0.01);
  for (double f : s.feature_frequency) EXPECT_NEAR(f, 1.0 / 6.0, 0.01);
  EXPECT_NEAR(s.feature_perplexity, 6.0, 0.01);
}

TEST(Usage, SingleIndexPerplexityOne) {
  UsageAccumulator acc({4, 4});
  std::vector<int64_t> tuples(200, 2);
  acc.add(tuples);
  auto s = acc.result();
  EXPECT_DOUBLE_EQ(s.perplexity[0], 1.0);
  EXPECT_DOUBLE_EQ(s.perplexity[1], 1.0);
}

TEST(Usage, UniformPerplexityApproachesRadix) {
  std::mt19937 rng(8);
  UsageAccumulator acc({8});
  std::vector<int64_t> tuples(40000);
  for (auto& t : tuples) t = static_cast<int64_t>(rng() % 8);
  acc.add(tuples);
  // perplexity deficit of a multinomial plug-in estimate is ~ (a-1)/(2N) nats
  EXPECT_NEAR(acc.result().perplexity[0], 8.0, 0.02);
}

TEST(Usage, Errors) {
  UsageAccumulator acc({2, 3});
  EXPECT_THROW(acc.result(), std::logic_error);
  std::vector<int64_t> bad{0, 3};
  EXPECT_THROW(acc.add(bad), std::out_of_range);
  std::vector<int64_t> partial{0};
  EXPECT_THROW(acc.add(partial), std::invalid_argument);
}

TEST(GaussianSmooth, Basics) {
  std::vector<double> constant(9, 2.0);
  for (double v : gaussian_smooth(constant)) EXPECT_NEAR(v, 2.0, 1e-12);
  std::vector<double> ramp{0, 1, 2, 3, 4, 5, 6};
  auto s = gaussian_smooth(ramp);
  ASSERT_EQ(s.size(), ramp.size());
  EXPECT_NEAR(s[3], 3.0, 1e-12);  // symmetric interior
  auto id = gaussian_smooth(ramp, 1);
  EXPECT_EQ(id, ramp);
  EXPECT_THROW(gaussian_smooth(ramp, 4), std::invalid_argument);
}

}  // namespace
}  // namespace gdr::metrics
