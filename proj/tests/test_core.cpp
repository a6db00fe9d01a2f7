#include <uno/core.hpp>

#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

using namespace uno;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("uno_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace

TEST(Softmax, UniformForEqualLogits) {
  for (double p : softmax({0.0, 0.0, 0.0, 0.0})) EXPECT_DOUBLE_EQ(p, 0.25);
}

TEST(Softmax, TwoClassHandValue) {
  auto p = softmax({1.0, 0.0});
  EXPECT_NEAR(p[0], 0.7311, 1e-4);
  EXPECT_NEAR(p[1], 0.2689, 1e-4);
}

TEST(Softmax, LargeLogitsDoNotOverflow) {
  auto p = softmax({1000.0, 0.0});
  EXPECT_DOUBLE_EQ(p[0], 1.0);
  EXPECT_GE(p[1], 0.0);
  EXPECT_LT(p[1], 1e-300);
}

TEST(Softmax, ShiftInvariance) {
  rng gen(11);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> v(2 + trial % 7);
    for (double& x : v) x = gen.uniform(-20, 20);
    auto shifted = v;
    const double c = gen.uniform(-50, 50);
    for (double& x : shifted) x += c;
    auto a = softmax(v), b = softmax(shifted);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-9);
  }
}

TEST(Softmax, MapSatisfiesProbInvariant) {
  rng gen(3);
  std::vector<float> l(5 * 4 * 6);
  for (float& v : l) v = static_cast<float>(gen.uniform(-30, 30));
  auto p = softmax(LogitMap(5, 4, 6, l));  // constructor validates sums
  EXPECT_EQ(p.num_classes(), 6);
}

TEST(Argmax, PicksLargest) {
  ProbMap p(1, 1, 3, {0.1f, 0.7f, 0.2f});
  EXPECT_EQ(argmax_labels(p)[0], 1);
}

TEST(Argmax, TiesGoToLowestIndex) {
  EXPECT_EQ(argmax_labels(ProbMap(1, 1, 2, {0.5f, 0.5f}))[0], 0);
  std::vector<float> uniform(3 * 3 * 4, 0.25f);
  auto labels = argmax_labels(ProbMap(3, 3, 4, uniform));
  for (auto l : labels.labels()) EXPECT_EQ(l, 0);
}

TEST(Fields, ImageRejectsNonFinite) {
  EXPECT_THROW(Image(1, 1, 1, {std::numeric_limits<float>::quiet_NaN()}), validation_error);
  EXPECT_THROW(Image(2, 2, 1, {0.f, 0.f, 0.f}), validation_error);
}

TEST(Fields, ProbMapRejectsBadRows) {
  EXPECT_THROW(ProbMap(1, 1, 2, {0.6f, 0.6f}), validation_error);
  EXPECT_THROW(ProbMap(1, 1, 2, {1.5f, -0.5f}), validation_error);
}

TEST(Fields, UncertaintyMapRejectsNegative) {
  EXPECT_THROW(UncertaintyMap(1, 1, {-0.1f}), validation_error);
}

TEST(Fields, TemperatureMapRange) {
  EXPECT_THROW(TemperatureMap(1, 1, {0.0f}), validation_error);
  EXPECT_THROW(TemperatureMap(1, 1, {2e3f}), validation_error);
  EXPECT_NO_THROW(TemperatureMap(1, 2, {1e-3f, 1e3f}));
}

TEST(Fields, LabelMapRejectsOutOfRange) {
  EXPECT_THROW(LabelMap(1, 2, 3, {0, 3}), validation_error);
}

TEST(Fields, ConcatChannelsInterleavesPerPixel) {
  Image a(1, 2, 2, {1, 2, 3, 4});
  Image b(1, 2, 1, {9, 8});
  auto c = concat_channels(a, b);
  EXPECT_EQ(c.channels(), 3);
  EXPECT_EQ(std::vector<float>(c.values().begin(), c.values().end()), (std::vector<float>{1, 2, 9, 3, 4, 8}));
  EXPECT_THROW(concat_channels(a, Image(2, 1, 1, {0, 0})), validation_error);
}

TEST(Rng, DeterministicAndSeedSensitive) {
  rng a(5), b(5), c(6);
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next();
    EXPECT_EQ(x, b.next());
    EXPECT_NE(x, c.next());
  }
  EXPECT_NE(derive_seed(1, 2), derive_seed(2, 1));
  EXPECT_EQ(derive_seed(1, 2, 3), derive_seed(derive_seed(1, 2), 3));
}

TEST(Rng, DistributionMoments) {
  rng gen(42);
  const int n = 200000;
  double su = 0, sn = 0, sn2 = 0, sp = 0;
  for (int i = 0; i < n; ++i) {
    const double u = gen.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    su += u;
    const double z = gen.normal();
    sn += z;
    sn2 += z * z;
    sp += gen.poisson(4.0);
  }
  EXPECT_NEAR(su / n, 0.5, 0.005);
  EXPECT_NEAR(sn / n, 0.0, 0.01);
  EXPECT_NEAR(sn2 / n, 1.0, 0.01);
  EXPECT_NEAR(sp / n, 4.0, 0.02);
  for (int i = 0; i < 1000; ++i) {
    const int k = gen.uniform_int(-2, 3);
    EXPECT_GE(k, -2);
    EXPECT_LE(k, 3);
  }
}

TEST(TensorIo, RoundTripIsBitExact) {
  Image img(2, 3, 2, {0.f, 1.f, -2.5f, 3.25f, 1e-7f, 6.f, 7.f, 8.f, 9.f, 10.f, 11.f, 0.125f});
  std::stringstream buf;
  write_tensor(buf, img.height(), img.width(), img.channels(), img.values());
  const std::string bytes = buf.str();
  EXPECT_EQ(bytes.substr(0, 8), "UNOF0001");
  EXPECT_EQ(bytes.size(), 8u + 12u + 12u * 4u);
  auto t = read_tensor(buf);
  EXPECT_EQ(t.height, 2);
  EXPECT_EQ(t.width, 3);
  EXPECT_EQ(t.channels, 2);
  EXPECT_EQ(t.data, std::vector<float>(img.values().begin(), img.values().end()));
}

TEST(TensorIo, RejectsBadMagicAndTruncation) {
  std::stringstream bad("NOTMAGIC");
  EXPECT_THROW(read_tensor(bad), validation_error);
  std::stringstream buf;
  std::vector<float> v(4, 1.f);
  write_tensor(buf, 2, 2, 1, v);
  std::string s = buf.str();
  std::stringstream cut(s.substr(0, s.size() - 3));
  EXPECT_THROW(read_tensor(cut), validation_error);
}

TEST(TensorIo, FilesAndLabels) {
  const auto dir = temp_dir("core_io");
  Image img(2, 2, 1, {0.1f, 0.2f, 0.3f, 0.4f});
  save_tensor((dir / "x.unof").string(), img);
  EXPECT_EQ(load_image((dir / "x.unof").string()), img);
  LabelMap labels(2, 2, 6, {0, 5, 2, 1});
  save_labels((dir / "y.unol").string(), labels);
  EXPECT_EQ(load_labels((dir / "y.unol").string(), 6), labels);
  EXPECT_THROW(load_labels((dir / "y.unol").string(), 3), validation_error);
  EXPECT_THROW(load_image((dir / "missing.unof").string()), validation_error);
}
