#include <gtest/gtest.h>

#include <boost/rational.hpp>

#include "osmseg/error.hpp"
#include "osmseg/metrics.hpp"
#include "support/oracles.hpp"

using namespace osmseg;
using Q = boost::rational<long long>;

namespace {

ConfusionMatrix random_matrix(Rng& rng, std::uint64_t max_count) {
  ConfusionMatrix cm;
  for (auto& row : cm.counts) {
    for (auto& c : row) c = rng.bernoulli(0.15) ? 0 : rng.below(max_count + 1);
  }
  return cm;
}

}  // namespace

TEST(Metrics, ScoresMatchIndependentRecomputation) {
  Rng rng(31);
  for (int i = 0; i < 1000; ++i) {
    const auto cm = random_matrix(rng, i % 2 ? 50 : 1000000);
    const ClassScores s = scores(cm);
    const oracle::Scores o = oracle::scores(cm);
    for (int k = 0; k < 3; ++k) {
      ASSERT_NEAR(s.precision[k], o.p[k], 1e-12);
      ASSERT_NEAR(s.recall[k], o.r[k], 1e-12);
      ASSERT_NEAR(s.f1[k], o.f[k], 1e-12);
    }
    ASSERT_NEAR(s.avg_f1, o.avg_f1, 1e-12);
    ASSERT_NEAR(s.accuracy, o.accuracy, 1e-12);
  }
}

TEST(Metrics, HarmonicMeanIdentitiesHoldExactly) {
  Rng rng(32);
  for (int i = 0; i < 1000; ++i) {
    const auto cm = random_matrix(rng, 5000);
    const ClassScores s = scores(cm);
    for (int k = 0; k < 3; ++k) {
      long long tp = static_cast<long long>(cm.counts[k][k]), row = 0, col = 0;
      for (int j = 0; j < 3; ++j) {
        row += static_cast<long long>(cm.counts[k][j]);
        col += static_cast<long long>(cm.counts[j][k]);
      }
      if (tp == 0) {
        EXPECT_EQ(s.f1[k], 0.0);
        continue;
      }
      const Q p(tp, col), r(tp, row);
      const Q f = Q(2) * p * r / (p + r);
      EXPECT_EQ(f, Q(2 * tp, row + col));
      EXPECT_EQ(Q(1) / f, (Q(1) / p + Q(1) / r) / Q(2));
      EXPECT_NEAR(s.f1[k], boost::rational_cast<double>(f), 1e-15);
      EXPECT_LE(s.f1[k], std::max(s.precision[k], s.recall[k]));
      EXPECT_GE(s.f1[k], std::min(s.precision[k], s.recall[k]));
    }
  }
}

TEST(Metrics, DegenerateClassesAreFlagged) {
  ConfusionMatrix cm;
  cm.counts[0][0] = 10;
  cm.counts[0][1] = 2;
  const ClassScores s = scores(cm);
  EXPECT_TRUE(s.recall_degenerate[1]);
  EXPECT_FALSE(s.precision_degenerate[1]);
  EXPECT_EQ(s.precision[1], 0.0);
  EXPECT_TRUE(s.precision_degenerate[2] && s.recall_degenerate[2] && s.f1_degenerate[2]);
  EXPECT_TRUE(s.degenerate());
  EXPECT_NE(scores_table(s).find('*'), std::string::npos);
  EXPECT_EQ(scores(ConfusionMatrix{}).accuracy, 0.0);
}

TEST(Metrics, PerfectPrediction) {
  ConfusionMatrix cm;
  for (int k = 0; k < 3; ++k) cm.counts[k][k] = 7;
  const ClassScores s = scores(cm);
  EXPECT_EQ(s.avg_f1, 1.0);
  EXPECT_EQ(s.accuracy, 1.0);
  EXPECT_FALSE(s.degenerate());
}

TEST(Metrics, AccumulateWithMaskAndErrors) {
  const std::vector<std::uint8_t> pred{0, 1, 2, 2, 1};
  const std::vector<std::uint8_t> truth{0, 1, 1, 2, 0};
  const std::vector<std::uint8_t> mask{1, 1, 1, 0, 1};
  const auto cm = osmseg::accumulate(ConfusionMatrix{}, pred, truth, std::span<const std::uint8_t>(mask));
  EXPECT_EQ(cm.total(), 4u);
  EXPECT_EQ(cm.counts[1][2], 1u);
  EXPECT_EQ(cm.counts[0][1], 1u);
  EXPECT_EQ(cm.counts[2][2], 0u);
  const std::vector<std::uint8_t> short_truth{0, 1};
  EXPECT_THROW(osmseg::accumulate(ConfusionMatrix{}, pred, short_truth), ShapeMismatch);
  const std::vector<std::uint8_t> bad{0, 1, 3, 2, 1};
  EXPECT_THROW(osmseg::accumulate(ConfusionMatrix{}, bad, truth), LabelOutOfRange);
}

TEST(Metrics, AccumulateIsAdditive) {
  Rng rng(33);
  std::vector<std::uint8_t> a(100), b(100);
  for (auto& v : a) v = static_cast<std::uint8_t>(rng.below(3));
  for (auto& v : b) v = static_cast<std::uint8_t>(rng.below(3));
  auto whole = osmseg::accumulate(ConfusionMatrix{}, a, b);
  auto part = osmseg::accumulate(ConfusionMatrix{}, std::span(a).first(40), std::span(b).first(40));
  part += osmseg::accumulate(ConfusionMatrix{}, std::span(a).subspan(40), std::span(b).subspan(40));
  EXPECT_EQ(whole, part);
}

TEST(Metrics, JsonCarriesConfusion) {
  Rng rng(34);
  const auto cm = random_matrix(rng, 100);
  const std::string json = scores_to_json(scores(cm), cm);
  EXPECT_EQ(confusion_from_json(json), cm);
  EXPECT_NE(json.find("\"road\""), std::string::npos);
}
