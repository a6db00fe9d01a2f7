#include <uno/calibration.hpp>

#include <gtest/gtest.h>

using namespace uno;

namespace {

DeviationStats stats(double mu, double sigma) { return {"expert_a", metric_kind::entropy, mu, sigma, 10}; }

}  // namespace

TEST(DeviationRatio, ClampAtOneInsideBand) {
  const auto s = stats(0.2, 0.1);
  for (double mu_test : {0.0, 0.1, 0.2, 0.25, 0.3}) EXPECT_EQ(deviation_ratio(mu_test, s).value(), 1.0);
  EXPECT_LT(deviation_ratio(0.30001, s).value(), 1.0);
}

TEST(DeviationRatio, HalfWhenExcessEqualsMean) {
  EXPECT_NEAR(deviation_ratio(0.5, stats(0.2, 0.1)).value(), 0.5, 1e-12);
  EXPECT_NEAR(deviation_ratio(2.0, stats(0.75, 0.5)).value(), 0.5, 1e-12);
}

TEST(DeviationRatio, MonotoneAndBounded) {
  rng gen(5);
  for (int i = 0; i < 1000; ++i) {
    const auto s = stats(gen.uniform(0.01, 2.0), gen.uniform(0.0, 0.5));
    const double a = gen.uniform(0.0, 5.0), b = a + gen.uniform(0.0, 5.0);
    const double da = deviation_ratio(a, s).value(), db = deviation_ratio(b, s).value();
    ASSERT_GT(db, 0.0);
    ASSERT_LE(da, 1.0);
    ASSERT_LE(db, da);
  }
}

TEST(DeviationRatio, DegenerateMeanUsesGuard) {
  auto d = deviation_ratio(0.0, stats(0.0, 0.0));
  EXPECT_EQ(d.value(), 1.0);
  EXPECT_TRUE(d.degenerate());
  auto e = deviation_ratio(1.0, stats(0.0, 0.0));
  EXPECT_TRUE(e.degenerate());
  EXPECT_GT(e.value(), 0.0);
  EXPECT_LT(e.value(), 1e-6);
}

TEST(DeviationRatio, RejectsOutOfRange) {
  EXPECT_THROW(DeviationRatio(0.0), validation_error);
  EXPECT_THROW(DeviationRatio(1.5), validation_error);
  EXPECT_NO_THROW(DeviationRatio(1.0));
}

TEST(Combine, MinimumAcrossMetricsAndModalities) {
  EXPECT_EQ(combine_min({DeviationRatio(0.9), DeviationRatio(0.4), DeviationRatio(0.7)}).value(), 0.4);
  EXPECT_EQ(multimodal_min({DeviationRatio(0.8), DeviationRatio(0.6)}).value(), 0.6);
  EXPECT_THROW(combine_min(std::span<const DeviationRatio>{}), validation_error);
}

TEST(FitStats, PopulationMoments) {
  const std::vector<double> v{1, 2, 3, 4};
  auto s = fit_stats(v, "x", metric_kind::ave_temp);
  EXPECT_DOUBLE_EQ(s.mu_train, 2.5);
  EXPECT_DOUBLE_EQ(s.sigma_train, std::sqrt(1.25));
  EXPECT_EQ(s.num_images, 4u);
  EXPECT_THROW(fit_stats(std::vector<double>{1.0}), validation_error);
}

TEST(ScaleLogits, UnitRatioIsSoftmax) {
  rng gen(8);
  for (int i = 0; i < 200; ++i) {
    std::vector<double> l(gen.uniform_int(2, 9));
    for (double& v : l) v = gen.uniform(-15, 15);
    auto a = scale_logits(l, 1.0);
    auto b = softmax(l);
    for (std::size_t c = 0; c < l.size(); ++c) ASSERT_NEAR(a[c], b[c], 1e-9);
  }
}

TEST(ScaleLogits, PreservesArgmaxAndFlattens) {
  rng gen(9);
  for (int i = 0; i < 1000; ++i) {
    std::vector<double> l(gen.uniform_int(2, 9));
    for (double& v : l) v = gen.uniform(-10, 10);
    const double d1 = gen.uniform(0.01, 1.0), d2 = d1 * gen.uniform(0.05, 1.0);
    auto p1 = scale_logits(l, d1), p2 = scale_logits(l, d2);
    auto arg = [](const std::vector<double>& v) { return std::max_element(v.begin(), v.end()) - v.begin(); };
    ASSERT_EQ(arg(p1), arg(l));
    ASSERT_EQ(arg(p2), arg(l));
    ASSERT_GE(entropy(p2) + 1e-12, entropy(p1));
  }
}

TEST(ScaleLogits, MapVersionMatches) {
  LogitMap l(1, 2, 3, {2.0f, 0.0f, -1.0f, 0.5f, 0.5f, 3.0f});
  auto p = scale_logits(l, DeviationRatio(0.5));
  auto ref = scale_logits(std::vector<double>{2.0, 0.0, -1.0}, 0.5);
  for (int c = 0; c < 3; ++c) EXPECT_NEAR(p.pixel(0)[c], ref[c], 1e-6);
}

TEST(ScalarTemperature, RecoversKnownScale) {
  // Labels drawn from softmax(z); the model reports 4z, so T should be ~4.
  rng gen(12);
  const int n = 4000, nc = 4;
  std::vector<float> logits(n * nc);
  std::vector<std::uint8_t> labels(n);
  for (int i = 0; i < n; ++i) {
    std::vector<double> z(nc);
    for (double& v : z) v = 1.5 * gen.normal();
    auto p = softmax(z);
    double u = gen.uniform(), acc = 0.0;
    int y = nc - 1;
    for (int c = 0; c < nc; ++c)
      if ((acc += p[c]) > u) {
        y = c;
        break;
      }
    labels[i] = static_cast<std::uint8_t>(y);
    for (int c = 0; c < nc; ++c) logits[i * nc + c] = static_cast<float>(4.0 * z[c]);
  }
  LogitMap lm(1, n, nc, std::move(logits));
  LabelMap ym(1, n, nc, std::move(labels));
  std::vector<logit_sample> set{{&lm, &ym}};
  const double t = fit_scalar_temperature(set);
  EXPECT_NEAR(t, 4.0, 0.6);
  EXPECT_LE(scalar_temperature_nll(set, t), scalar_temperature_nll(set, 1.0));
  EXPECT_THROW(fit_scalar_temperature(std::span<const logit_sample>{}), validation_error);
}

TEST(StatsJson, RoundTripAndValidation) {
  DeviationStats s{"expert_b", metric_kind::mutual_information, 0.125, 0.03, 600};
  auto back = stats_from_json(to_json(s));
  EXPECT_EQ(back.expert_id, "expert_b");
  EXPECT_EQ(back.metric, metric_kind::mutual_information);
  EXPECT_EQ(back.mu_train, 0.125);
  EXPECT_EQ(back.sigma_train, 0.03);
  EXPECT_EQ(back.num_images, 600u);
  auto bad = to_json(s);
  bad["sigma_train"] = -1.0;
  EXPECT_THROW(stats_from_json(bad), validation_error);
  bad = to_json(s);
  bad["metric"] = "nope";
  EXPECT_THROW(stats_from_json(bad), validation_error);
}
