#include <gtest/gtest.h>

#include <cmath>

#include "generators.hpp"
#include "mcanet/csra.hpp"
#include "mcanet/errors.hpp"
#include "mcanet/gradcheck.hpp"

using namespace mcanet;
using mcanet::testing::for_all;
using mcanet::testing::Gen;

namespace {

FeatureMap<double> field(Gen& g, std::size_t n, std::size_t d, std::size_t h, std::size_t w) {
  return {g.tensor<double>(Dims{n, d, h, w})};
}

FeatureMap<double> constant_field(std::size_t n, const std::vector<double>& v, std::size_t h, std::size_t w) {
  Tensor<double> t(Dims{n, v.size(), h, w});
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t c = 0; c < v.size(); ++c)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) t.at(b, c, y, x) = v[c];
  return {t};
}

double dot_at(const FeatureMap<double>& x, const Tensor<double>& m, std::size_t n, std::size_t i,
              std::size_t y, std::size_t xx) {
  double s = 0;
  for (std::size_t c = 0; c < x.channels(); ++c) s += x.tensor.at(n, c, y, xx) * m.at(i, c);
  return s;
}

}  // namespace

TEST(ScoreMaps, ZeroClassifierRowGivesZeroMap) {
  Gen g(1);
  auto x = field(g, 2, 5, 3, 4);
  auto m = g.tensor<double>(Dims{3, 5});
  for (std::size_t c = 0; c < 5; ++c) m.at(1, c) = 0;
  auto r = class_score_maps(x, m);
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t y = 0; y < 3; ++y)
      for (std::size_t xx = 0; xx < 4; ++xx) EXPECT_EQ(r.at(n, 1, y, xx), 0.0);
}

TEST(ScoreMaps, ConstantFieldGivesConstantMap) {
  auto x = constant_field(1, {1.0, -2.0, 0.5}, 3, 3);
  Gen g(2);
  auto m = g.tensor<double>(Dims{2, 3});
  auto r = class_score_maps(x, m);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t k = 0; k < 9; ++k) EXPECT_NEAR(r[i * 9 + k], r[i * 9], 1e-15);
}

TEST(ScoreMaps, MatchesPerLocationDotProducts) {
  for_all(20, 3, [](Gen& g, std::size_t c) {
    auto x = field(g, g.size(1, 3), g.size(1, 6), g.size(1, 4), g.size(1, 4));
    auto m = g.tensor<double>(Dims{g.size(1, 4), x.channels()});
    auto r = class_score_maps(x, m);
    for (std::size_t n = 0; n < x.batch(); ++n)
      for (std::size_t i = 0; i < m.dim(0); ++i)
        for (std::size_t y = 0; y < x.height(); ++y)
          for (std::size_t xx = 0; xx < x.width(); ++xx)
            EXPECT_NEAR(r.at(n, i, y, xx), dot_at(x, m, n, i, y, xx), 1e-12) << "case " << c;
  });
}

TEST(Attention, UniformMapGivesUniformWeights) {
  Tensor<double> r(Dims{1, 2, 3, 3}, 0.7);
  auto s = attention_scores(r, 5.0);
  ASSERT_EQ(s.dims(), (Dims{1, 2, 9}));
  for (double v : s.data()) EXPECT_NEAR(v, 1.0 / 9.0, 1e-15);
}

TEST(Attention, TemperatureLimits) {
  Gen g(4);
  auto r = g.tensor<double>(Dims{1, 1, 4, 4});
  r[5] = 2.0;  // unique max
  auto flat = attention_scores(r, 1e-6);
  for (double v : flat.data()) EXPECT_NEAR(v, 1.0 / 16.0, 1e-4);
  auto sharp = attention_scores(r, 1e4);
  EXPECT_GT(sharp[5], 0.999);
}

TEST(Aggregate, ConstantFieldAndDelta) {
  auto x = constant_field(1, {3.0, -1.0}, 2, 2);
  Gen g(5);
  auto r = g.tensor<double>(Dims{1, 3, 2, 2});
  auto a = class_feature_aggregate(x, attention_scores(r, 1.0));
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_NEAR(a[i * 2 + 0], 3.0, 1e-14);
    EXPECT_NEAR(a[i * 2 + 1], -1.0, 1e-14);
  }
  auto y = field(g, 1, 4, 2, 3);
  Tensor<double> onehot(Dims{1, 1, 6});
  onehot[4] = 1.0;
  auto ak = class_feature_aggregate(y, onehot);
  for (std::size_t c = 0; c < 4; ++c) EXPECT_EQ(ak[c], y.tensor.at(0, c, 1, 1));
}

TEST(Aggregate, MatchesExplicitSummation) {
  for_all(20, 6, [](Gen& g, std::size_t c) {
    auto x = field(g, 2, g.size(1, 5), g.size(1, 4), g.size(1, 4));
    const std::size_t classes = g.size(1, 3), l = x.locations();
    auto s = attention_scores(g.tensor<double>(Dims{2, classes, x.height(), x.width()}), g.real(0.1, 5));
    auto a = class_feature_aggregate(x, s);
    for (std::size_t n = 0; n < 2; ++n)
      for (std::size_t i = 0; i < classes; ++i)
        for (std::size_t d = 0; d < x.channels(); ++d) {
          double acc = 0;
          for (std::size_t k = 0; k < l; ++k)
            acc += s[(n * classes + i) * l + k] * x.tensor[(n * x.channels() + d) * l + k];
          EXPECT_NEAR(a[(n * classes + i) * x.channels() + d], acc, 1e-12) << "case " << c;
        }
  });
}

TEST(GlobalFeature, MeanOracleAndUniformAttention) {
  auto cf = constant_field(2, {1.5, -4.0}, 3, 2);
  auto gc = global_feature(cf);
  EXPECT_NEAR(gc.at(1, 0), 1.5, 1e-15);
  EXPECT_NEAR(gc.at(1, 1), -4.0, 1e-15);
  Gen g(7);
  auto x = field(g, 2, 3, 4, 5);
  auto gx = global_feature(x);
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t d = 0; d < 3; ++d) {
      double s = 0;
      for (std::size_t k = 0; k < 20; ++k) s += x.tensor[(n * 3 + d) * 20 + k];
      EXPECT_NEAR(gx.at(n, d), s / 20, 1e-14);
    }
  Tensor<double> uniform(Dims{2, 1, 20}, 1.0 / 20);
  auto a = class_feature_aggregate(x, uniform);
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t d = 0; d < 3; ++d) EXPECT_NEAR(a[n * 3 + d], gx.at(n, d), 1e-14);
}

TEST(Head, LambdaZeroIsAveragePooledClassifier) {
  Gen g(8);
  auto x = field(g, 2, 4, 3, 3);
  auto m = g.tensor<double>(Dims{3, 4});
  auto y = csra_head_forward(x, m, 3.0, 0.0);
  auto ref = linear<double>(global_feature(x), m, nullptr);
  EXPECT_LT(max_abs_diff(y, ref), 1e-14);
}

TEST(Head, ConstantFieldIsIndependentOfTemperature) {
  auto x = constant_field(1, {1.0, 2.0, -1.0}, 3, 3);
  Tensor<double> m(Dims{2, 3}, std::vector<double>{1, 0, 1, 0.5, -1, 2});
  for (double t : {0.5, 1.0, 99.0})
    for (double lambda : {0.0, 0.1, 1.0}) {
      auto y = csra_head_forward(x, m, t, lambda);
      // m_i . v = 0 and -3.5; the head adds lambda times the same value.
      EXPECT_NEAR(y[0], (1 + lambda) * 0.0, 1e-13);
      EXPECT_NEAR(y[1], (1 + lambda) * -3.5, 1e-13);
    }
}

TEST(Head, ScoreRouteEqualsFeatureRoute) {
  for_all(20, 9, [](Gen& g, std::size_t c) {
    auto x = field(g, g.size(1, 3), g.size(1, 6), g.size(1, 4), g.size(1, 4));
    auto m = g.tensor<double>(Dims{g.size(1, 4), x.channels()});
    const double t = g.real(0.5, 99), lambda = g.real(0, 1);
    auto y = csra_head_forward(x, m, t, lambda);
    auto d = csra_head_details(x, m, t, lambda);
    EXPECT_LT(max_abs_diff(y, d.logits), 1e-12) << "case " << c;
  });
}

TEST(Head, GradientMatchesFiniteDifferences) {
  DifferentiableOp op;
  op.name = "csra";
  op.forward = [](std::span<const Tensor<double>> in) {
    return csra_head_forward(FeatureMap<double>{in[0]}, in[1], 2.0, 0.3);
  };
  op.backward = [](std::span<const Tensor<double>> in, const Tensor<double>& g) {
    auto r = csra_head_backward(FeatureMap<double>{in[0]}, in[1], 2.0, 0.3, g);
    return std::vector<Tensor<double>>{r.features, r.classifier};
  };
  auto report = gradient_check(op, {random_tensor(Dims{2, 3, 2, 3}, 1), random_tensor(Dims{4, 3}, 2)});
  EXPECT_LT(report.worst(), 1e-5);
}

TEST(MultiHead, DefaultTemperatures) {
  EXPECT_EQ(CsraHeadConfig::default_temperatures(1), std::vector<double>{1.0});
  EXPECT_EQ(CsraHeadConfig::default_temperatures(4), (std::vector<double>{1, 2, 3, 99}));
  EXPECT_EQ(CsraHeadConfig::default_temperatures(8), (std::vector<double>{1, 2, 3, 4, 5, 6, 7, 99}));
  EXPECT_THROW(CsraHeadConfig::default_temperatures(0), ConfigError);
}

TEST(MultiHead, SingleHeadIsBitwiseSingleHead) {
  Gen g(10);
  auto x = field(g, 2, 5, 3, 3);
  auto m = g.tensor<double>(Dims{4, 5});
  auto cfg = CsraHeadConfig::with_heads(4, 1, 0.2);
  EXPECT_EQ(multi_head_forward(x, m, cfg), csra_head_forward(x, m, 1.0, 0.2));
}

TEST(MultiHead, DuplicateHeadsDouble) {
  Gen g(11);
  auto x = field(g, 2, 5, 3, 3);
  auto m = g.tensor<double>(Dims{4, 5});
  CsraHeadConfig cfg{4, 2, {3.0, 3.0}, 0.4};
  auto y = multi_head_forward(x, m, cfg);
  auto one = csra_head_forward(x, m, 3.0, 0.4);
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_EQ(y[i], 2 * one[i]);
}

TEST(MultiHead, ConfigValidation) {
  CsraHeadConfig c{3, 2, {1.0}, 0.1};
  EXPECT_THROW(c.validate(), ConfigError);
  c = CsraHeadConfig{3, 2, {1.0, -2.0}, 0.1};
  EXPECT_THROW(c.validate(), ConfigError);
  c = CsraHeadConfig{3, 1, {1.0}, -0.1};
  EXPECT_THROW(c.validate(), ConfigError);
  c = CsraHeadConfig{0, 1, {1.0}, 0.1};
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(PredictLabels, ThresholdAtZeroLogit) {
  Tensor<double> z(Dims{1, 3}, std::vector<double>{-1, 0, 3});
  auto l = predict_labels(z);
  EXPECT_EQ(l.values, (std::vector<std::uint8_t>{0, 1, 1}));
  Tensor<double> neg(Dims{2, 2}, -0.01);
  for (auto v : predict_labels(neg).values) EXPECT_EQ(v, 0);
  Tensor<double> p(Dims{1, 1}, 0.2);
  EXPECT_NEAR(sigmoid(0.2), 0.5498, 1e-4);
  EXPECT_EQ(predict_labels(p).values[0], 1);
}
