#include <uno/fusion.hpp>

#include <gtest/gtest.h>

using namespace uno;

namespace {

using dist = std::vector<double>;

std::size_t arg(const dist& v) { return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin()); }

const dist e1{0.7, 0.25, 0.03, 0.02};
const dist e2{0.05, 0.5, 0.25, 0.2};
const dist e3{0.05, 0.8, 0.1, 0.05};

LogitMap random_logits(int w, int nc, std::uint64_t seed) {
  rng gen(seed);
  std::vector<float> v(static_cast<std::size_t>(w) * nc);
  for (float& x : v) x = static_cast<float>(3.0 * gen.normal());
  return LogitMap(1, w, nc, std::move(v));
}

}  // namespace

TEST(NoisyOr, TwoExpertHandValues) {
  const std::vector<dist> two{e1, e2};
  auto s = noisy_or_scores(two);
  const dist want{0.715, 0.625, 0.2725, 0.216};
  for (int c = 0; c < 4; ++c) EXPECT_NEAR(s[c], want[c], 1e-12);
  EXPECT_EQ(arg(noisy_or(two)), 0u);
  EXPECT_EQ(arg(soft_mult(two)), 1u);
}

TEST(NoisyOr, ThirdExpertFlipsDecision) {
  const std::vector<dist> three{e1, e2, e3};
  auto s = noisy_or_scores(three);
  EXPECT_NEAR(s[0], 0.72925, 1e-12);
  EXPECT_NEAR(s[1], 0.925, 1e-12);
  EXPECT_EQ(arg(noisy_or(three)), 1u);
}

TEST(NoisyOr, AddingExpertNeverLowersScores) {
  rng gen(3);
  for (int trial = 0; trial < 500; ++trial) {
    const int nc = gen.uniform_int(2, 8);
    std::vector<dist> experts;
    for (int k = 0; k < gen.uniform_int(1, 4); ++k) {
      std::vector<double> z(nc);
      for (double& v : z) v = 3.0 * gen.normal();
      experts.push_back(softmax(z));
    }
    auto before = noisy_or_scores(experts);
    std::vector<double> z(nc);
    for (double& v : z) v = 3.0 * gen.normal();
    experts.push_back(softmax(z));
    auto after = noisy_or_scores(experts);
    for (int c = 0; c < nc; ++c) ASSERT_GE(after[c], before[c]);
  }
}

TEST(NoisyOr, OrderInvariantAndSingleExpertIdentity) {
  const std::vector<dist> ab{e1, e2}, ba{e2, e1};
  EXPECT_EQ(noisy_or(ab), noisy_or(ba));
  const std::vector<dist> one{e2};
  auto p = noisy_or(one);
  for (int c = 0; c < 4; ++c) EXPECT_NEAR(p[c], e2[c], 1e-9);
}

TEST(NoisyOr, ClampKeepsCertainExpertsFinite) {
  const std::vector<dist> s{{1.0, 0.0}, {1.0, 0.0}};
  auto p = noisy_or(s);
  EXPECT_TRUE(std::isfinite(p[0]) && std::isfinite(p[1]));
  EXPECT_GT(p[0], 0.999);
}

TEST(SoftMult, ZeroMassFallsBackToUniform) {
  const std::vector<dist> s{{1.0, 0.0}, {0.0, 1.0}};
  auto p = soft_mult(s);
  EXPECT_DOUBLE_EQ(p[0], 0.5);
  EXPECT_DOUBLE_EQ(p[1], 0.5);
}

TEST(Fusion, RejectsMismatchedInputs) {
  const std::vector<dist> bad{{0.5, 0.5}, {0.2, 0.3, 0.5}};
  EXPECT_THROW(noisy_or(bad), validation_error);
  EXPECT_THROW(soft_mult(std::span<const dist>{}), validation_error);
  std::vector<FusionEntry> maps{{"a", ProbMap(1, 1, 2, {0.5f, 0.5f})}, {"b", ProbMap(1, 2, 2, {0.5f, 0.5f, 1.f, 0.f})}};
  EXPECT_THROW(noisy_or(maps), validation_error);
}

TEST(Fusion, MapMatchesPixelKernel) {
  std::vector<FusionEntry> maps{{"a", ProbMap(1, 1, 4, {0.7f, 0.25f, 0.03f, 0.02f})},
                                {"b", ProbMap(1, 1, 4, {0.05f, 0.5f, 0.25f, 0.2f})}};
  auto p = noisy_or(maps);
  auto ref = noisy_or(std::vector<dist>{e1, e2});
  for (int c = 0; c < 4; ++c) EXPECT_NEAR(p.pixel(0)[c], ref[c], 1e-6);
}

TEST(Uno, UnitRatiosReduceToNoisyOr) {
  std::vector<ExpertLogits> ex{{"expert_a", random_logits(5, 4, 1)}, {"expert_b", random_logits(5, 4, 2)}};
  const std::vector<DeviationRatio> ones{DeviationRatio(1.0), DeviationRatio(1.0)};
  auto fused = fuse_uno(ex, ones, fusion_method::uno);
  auto base = fuse_baseline(ex, fusion_method::noisy_or);
  for (std::size_t i = 0; i < fused.size(); ++i) EXPECT_NEAR(fused.values()[i], base.values()[i], 1e-6);
}

TEST(Uno, DegradedExpertLosesInfluence) {
  // A confidently says class 0, B mildly says class 1; shrinking A's delta hands the vote to B.
  std::vector<ExpertLogits> ex{{"expert_a", LogitMap(1, 1, 3, {6.0f, 0.0f, 0.0f})},
                               {"expert_b", LogitMap(1, 1, 3, {0.0f, 3.0f, 0.0f})}};
  const std::vector<DeviationRatio> trust{DeviationRatio(1.0), DeviationRatio(1.0)};
  const std::vector<DeviationRatio> distrust_a{DeviationRatio(0.05), DeviationRatio(1.0)};
  EXPECT_EQ(argmax_labels(fuse_uno(ex, trust, fusion_method::uno))[0], 0);
  EXPECT_EQ(argmax_labels(fuse_uno(ex, distrust_a, fusion_method::uno))[0], 1);
}

TEST(Uno, LeakUsesMultimodalRatio) {
  std::vector<ExpertLogits> ex{{"expert_a", random_logits(3, 4, 3)}, {"expert_b", random_logits(3, 4, 4)}};
  ExpertLogits leak{"expert_ab", random_logits(3, 4, 5)};
  const std::vector<DeviationRatio> d{DeviationRatio(0.8), DeviationRatio(0.3)};
  auto implicit = fuse_uno(ex, d, fusion_method::uno_pp, &leak);
  auto explicit_ = fuse_uno(ex, d, fusion_method::uno_pp, &leak, DeviationRatio(0.3));
  EXPECT_EQ(implicit, explicit_);
  std::vector<FusionEntry> manual{{"a", scale_logits(ex[0].logits, d[0])},
                                  {"b", scale_logits(ex[1].logits, d[1])},
                                  {"ab", scale_logits(leak.logits, DeviationRatio(0.3)), true}};
  EXPECT_EQ(implicit, noisy_or(manual));
  EXPECT_THROW(fuse_uno(ex, d, fusion_method::uno_pp), validation_error);
  EXPECT_THROW(fuse_uno(ex, d, fusion_method::noisy_or), validation_error);
  EXPECT_THROW(fuse_uno(ex, std::vector<DeviationRatio>{DeviationRatio(1.0)}, fusion_method::uno), validation_error);
}

TEST(Baseline, UnitTemperatureMatchesUnscaled) {
  std::vector<ExpertLogits> ex{{"expert_a", random_logits(4, 3, 6)}, {"expert_b", random_logits(4, 3, 7)}};
  const std::vector<double> t{1.0, 1.0};
  auto a = fuse_baseline(ex, fusion_method::soft_mult_t, t);
  auto b = fuse_baseline(ex, fusion_method::soft_mult);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a.values()[i], b.values()[i], 1e-6);
  EXPECT_THROW(fuse_baseline(ex, fusion_method::noisy_or_t), validation_error);
  EXPECT_THROW(fuse_baseline(ex, fusion_method::noisy_or_t, std::vector<double>{1.0, 0.0}), validation_error);
  EXPECT_THROW(fuse_baseline(ex, fusion_method::uno), validation_error);
}

TEST(Methods, NamesRoundTrip) {
  for (auto m : all_fusion_methods) EXPECT_EQ(fusion_method_from_string(to_string(m)), m);
  EXPECT_THROW(fusion_method_from_string("mean"), validation_error);
}
