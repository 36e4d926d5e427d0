#include <gtest/gtest.h>

#include <algorithm>
#include <sstream>

#include "generators.hpp"
#include "mcanet/errors.hpp"
#include "mcanet/metrics.hpp"
#include "oracles.hpp"

using namespace mcanet;
using mcanet::testing::brute_force_ap;
using mcanet::testing::for_all;
using mcanet::testing::Gen;

namespace {

PredictionSet make_set(std::size_t rows, std::size_t cols, std::vector<double> scores,
                       std::vector<std::uint8_t> labels) {
  PredictionSet p;
  p.rows = rows;
  p.cols = cols;
  p.scores = std::move(scores);
  p.labels = LabelMatrix(rows, cols);
  p.labels.values = std::move(labels);
  for (std::size_t c = 0; c < cols; ++c) p.class_names.push_back("c" + std::to_string(c));
  return p;
}

// Scores either continuous or drawn from a few levels so ties are common.
std::vector<double> draw_scores(Gen& g, std::size_t n) {
  const bool discrete = g.coin();
  std::vector<double> s(n);
  for (auto& v : s) v = discrete ? static_cast<double>(g.size(0, 4)) / 4.0 : g.real(0, 1);
  return s;
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

}  // namespace

TEST(AveragePrecision, HandExample) {
  std::vector<double> s{0.9, 0.8, 0.7};
  std::vector<std::uint8_t> l{1, 0, 1};
  EXPECT_NEAR(*average_precision(s, l), (1.0 + 2.0 / 3.0) / 2.0, 1e-15);
}

TEST(AveragePrecision, PerfectRankingIsOne) {
  for_all(50, 1, [](Gen& g, std::size_t) {
    const std::size_t n = g.size(2, 40);
    auto labels = g.bits(n);
    labels[0] = 1;
    std::vector<double> s(n);
    for (std::size_t i = 0; i < n; ++i) s[i] = labels[i] ? g.real(0.6, 1) : g.real(0, 0.5);
    EXPECT_EQ(*average_precision(s, labels), 1.0);
  });
}

TEST(AveragePrecision, TiesKeepOriginalOrder) {
  std::vector<double> s{0.5, 0.5};
  EXPECT_EQ(*average_precision(s, std::vector<std::uint8_t>{1, 0}), 1.0);
  EXPECT_EQ(*average_precision(s, std::vector<std::uint8_t>{0, 1}), 0.5);
}

TEST(AveragePrecision, NoPositivesIsUndefined) {
  std::vector<double> s{0.1, 0.2};
  EXPECT_FALSE(average_precision(s, std::vector<std::uint8_t>{0, 0}).has_value());
  EXPECT_THROW(average_precision(s, std::vector<std::uint8_t>{0}), DataError);
}

TEST(AveragePrecision, MatchesBruteForceOracleExactly) {
  for_all(500, 2, [](Gen& g, std::size_t i) {
    const std::size_t n = g.size(1, 60);
    auto s = draw_scores(g, n);
    auto l = g.bits(n, g.real(0.05, 0.9));
    auto got = average_precision(s, l);
    auto want = brute_force_ap(s, l);
    ASSERT_EQ(got.has_value(), want.has_value()) << "case " << i;
    if (want) {
      EXPECT_EQ(*got, *want) << "case " << i;
    }
  });
}

TEST(AveragePrecision, InvariantUnderMonotoneTransform) {
  for_all(100, 3, [](Gen& g, std::size_t i) {
    const std::size_t n = g.size(2, 50);
    auto s = draw_scores(g, n);
    auto l = g.bits(n);
    l[0] = 1;
    auto t = s;
    for (auto& v : t) v = 3.0 * v * v * v + 0.5;
    EXPECT_EQ(*average_precision(s, l), *average_precision(t, l)) << "case " << i;
  });
}

TEST(AveragePrecision, BoundedByUnitInterval) {
  for_all(200, 4, [](Gen& g, std::size_t) {
    const std::size_t n = g.size(1, 30);
    auto s = draw_scores(g, n);
    auto l = g.bits(n);
    if (auto ap = average_precision(s, l)) {
      EXPECT_GT(*ap, 0.0);
      EXPECT_LE(*ap, 1.0);
    }
  });
}

TEST(MeanAveragePrecision, Examples) {
  // Class 0 perfectly ranked (AP 1), class 1 positive ranked second (AP 0.5).
  auto p = make_set(2, 2, {0.9, 0.8, 0.1, 0.2}, {1, 0, 0, 1});
  EXPECT_DOUBLE_EQ(mean_average_precision(p), 0.75);
  auto perfect = make_set(3, 2, {0.9, 0.1, 0.2, 0.8, 0.7, 0.6}, {1, 0, 0, 1, 1, 1});
  EXPECT_EQ(mean_average_precision(perfect), 1.0);
}

TEST(MeanAveragePrecision, SkipsClassesWithoutPositives) {
  auto p = make_set(2, 3, {0.9, 0.5, 0.1, 0.2, 0.5, 0.8}, {1, 0, 0, 0, 0, 1});
  // Class 1 has no positives; classes 0 and 2 are perfectly ranked.
  EXPECT_EQ(mean_average_precision(p), 1.0);
  auto none = make_set(2, 1, {0.3, 0.4}, {0, 0});
  EXPECT_THROW(mean_average_precision(none), DataError);
}

TEST(MeanAveragePrecision, MatchesMeanOfOracleAps) {
  for_all(50, 5, [](Gen& g, std::size_t i) {
    const std::size_t rows = g.size(1, 30), cols = g.size(1, 6);
    auto p = make_set(rows, cols, draw_scores(g, rows * cols), g.bits(rows * cols));
    double sum = 0;
    std::size_t defined = 0;
    for (std::size_t c = 0; c < cols; ++c) {
      if (auto ap = brute_force_ap(p.score_column(c), p.label_column(c))) {
        sum += *ap;
        ++defined;
      }
    }
    if (defined == 0) {
      EXPECT_THROW(mean_average_precision(p), DataError);
    } else {
      EXPECT_DOUBLE_EQ(mean_average_precision(p), sum / static_cast<double>(defined)) << "case " << i;
    }
  });
}

TEST(MeanAveragePrecision, NullModelApTracksPrevalence) {
  Gen g(6);
  const std::size_t n = 10000;
  for (double prevalence : {0.1, 0.3, 0.5}) {
    std::vector<double> s(n);
    for (auto& v : s) v = g.real(0, 1);
    auto l = g.bits(n, prevalence);
    EXPECT_NEAR(*average_precision(s, l), prevalence, 0.05);
  }
}

TEST(OverallMetrics, DirectCountExample) {
  // TP=2 (rows 0,1 class 0), FP=1 (row 2 class 0), FN=1 (row 0 class 1).
  auto p = make_set(3, 2, {0.9, 0.2, 0.8, 0.1, 0.7, 0.3}, {1, 1, 1, 0, 0, 0});
  auto m = overall_metrics(p);
  EXPECT_DOUBLE_EQ(m.precision, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(m.recall, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(m.f1, 2.0 / 3.0);
}

TEST(OverallMetrics, DegenerateAndPerfect) {
  auto none = make_set(2, 2, {0.1, 0.2, 0.3, 0.4}, {0, 0, 0, 0});
  auto m = overall_metrics(none);
  EXPECT_EQ(m.precision, 0.0);
  EXPECT_EQ(m.recall, 0.0);
  EXPECT_EQ(m.f1, 0.0);
  auto perfect = make_set(2, 2, {0.9, 0.2, 0.5, 0.6}, {1, 0, 1, 1});
  m = overall_metrics(perfect);
  EXPECT_EQ(m.precision, 1.0);
  EXPECT_EQ(m.recall, 1.0);
  EXPECT_EQ(m.f1, 1.0);
}

TEST(OverallMetrics, F1IsHarmonicMeanAndBounded) {
  for_all(300, 7, [](Gen& g, std::size_t i) {
    const std::size_t rows = g.size(1, 20), cols = g.size(1, 5);
    auto p = make_set(rows, cols, draw_scores(g, rows * cols), g.bits(rows * cols));
    auto m = overall_metrics(p, g.real(0.1, 0.9));
    for (double v : {m.precision, m.recall, m.f1}) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
    const double h = m.precision + m.recall > 0 ? 2 * m.precision * m.recall / (m.precision + m.recall) : 0;
    EXPECT_NEAR(m.f1, h, 1e-12) << "case " << i;
    EXPECT_LE(m.f1, std::max(m.precision, m.recall) + 1e-15);
    EXPECT_GE(m.f1 + 1e-15, std::min(m.precision, m.recall));
  });
}

TEST(PredictionSetTest, ValidationAndConstruction) {
  auto bad = make_set(1, 2, {0.1}, {0, 1});
  EXPECT_THROW(bad.validate(), DataError);
  auto nonbinary = make_set(1, 2, {0.1, 0.2}, {0, 2});
  EXPECT_THROW(nonbinary.validate(), DataError);
  Tensor<float> s(Dims{2, 2}, std::vector<float>{0.25f, 0.5f, 0.75f, 1.f});
  LabelMatrix l(2, 2);
  auto p = make_prediction_set(s, l, {"a", "b"});
  EXPECT_EQ(p.score(1, 0), 0.75);
  EXPECT_EQ(p.score_column(1), (std::vector<double>{0.5, 1.0}));
}

TEST(Report, SingleClassPerfectRow) {
  auto p = make_set(3, 1, {0.9, 0.1, 0.8}, {1, 0, 1});
  auto r = per_class_report(p);
  ASSERT_EQ(r.classes.size(), 1u);
  const auto& c = r.classes[0];
  EXPECT_EQ(c.precision, 1.0);
  EXPECT_EQ(c.recall, 1.0);
  EXPECT_EQ(c.f1, 1.0);
  EXPECT_EQ(*c.ap, 1.0);
  EXPECT_EQ(r.map, 1.0);
}

TEST(Report, CsvAndTableLayout) {
  auto p = make_set(2, 2, {0.9, 0.2, 0.3, 0.8}, {1, 0, 0, 0});
  auto r = per_class_report(p);
  auto csv = lines(r.to_csv());
  ASSERT_EQ(csv.size(), 5u);
  EXPECT_EQ(csv[0], "class,precision,recall,f1,ap");
  EXPECT_EQ(csv[1], "c0,1.0000,1.0000,1.0000,1.0000");
  EXPECT_EQ(csv[2], "c1,0.0000,0.0000,0.0000,");
  EXPECT_EQ(csv[3], "mAP,,,,1.0000");
  EXPECT_EQ(csv[4].rfind("OP/OR/OF1,", 0), 0u);
  auto table = r.to_table();
  EXPECT_NE(table.find("c0"), std::string::npos);
  EXPECT_NE(table.find("mAP"), std::string::npos);
}

TEST(Report, HeadSweepRendersOneRowPerHeadCount) {
  std::vector<HeadSweepRow> rows{{1, 0.91}, {2, 0.915}, {4, 0.92}, {8, 0.9235}};
  auto csv = lines(render_head_sweep_csv(rows));
  ASSERT_EQ(csv.size(), 5u);
  EXPECT_EQ(csv[0], "heads,map");
  EXPECT_EQ(csv[4], "8,0.9235");
  auto table = lines(render_head_sweep_table(rows));
  ASSERT_EQ(table.size(), 5u);
  EXPECT_NE(table[3].find("0.9200"), std::string::npos);
}
