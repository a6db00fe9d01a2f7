#include <uno/tempnet.hpp>

#include <gtest/gtest.h>

#include <filesystem>

using namespace uno;

namespace {

// Five-point central difference; keeps rounding and truncation error well
// below the 1e-4 relative tolerance even for small gradients.
template <typename F>
double five_point(F&& f, double h) {
  return (8 * (f(h) - f(-h)) - (f(2 * h) - f(-2 * h))) / (12 * h);
}

Image noise_image(int h, int w, int c, std::uint64_t seed) {
  rng gen(seed);
  std::vector<float> v(static_cast<std::size_t>(h) * w * c);
  for (float& x : v) x = static_cast<float>(gen.uniform());
  return Image(h, w, c, std::move(v));
}

LogitMap random_logits(int h, int w, int nc, std::uint64_t seed, double scale = 3.0) {
  rng gen(seed);
  std::vector<float> v(static_cast<std::size_t>(h) * w * nc);
  for (float& x : v) x = static_cast<float>(scale * gen.normal());
  return LogitMap(h, w, nc, std::move(v));
}

LabelMap random_labels(int h, int w, int nc, std::uint64_t seed) {
  rng gen(seed);
  std::vector<std::uint8_t> v(static_cast<std::size_t>(h) * w);
  for (auto& l : v) l = static_cast<std::uint8_t>(gen.uniform_int(0, nc - 1));
  return LabelMap(h, w, nc, std::move(v));
}

}  // namespace

TEST(TempNet, StartsNearUnitTemperature) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto tn = build_tempnet(modality::a, seed);
    auto t = temp_forward(tn, noise_image(16, 16, 3, seed + 50));
    const double mean = image_score(t);
    EXPECT_GE(mean, 0.8);
    EXPECT_LE(mean, 1.2);
  }
}

TEST(TempNet, IdentityIsExactlyOne) {
  auto tn = build_tempnet(modality::b, 3);
  make_identity(tn);
  const auto t = temp_forward(tn, noise_image(8, 8, 1, 1));
  for (float v : t.values()) EXPECT_EQ(v, 1.0f);
}

TEST(TempNet, RejectsWrongInput) {
  auto tn = build_tempnet(modality::a, 0);
  EXPECT_THROW(temp_forward(tn, noise_image(8, 8, 1, 1)), validation_error);
  EXPECT_THROW(temp_forward(tn, noise_image(6, 8, 3, 1)), validation_error);
}

TEST(TempNet, RawOutputIsClamped) {
  EXPECT_EQ(temperature_from_raw(100.0f), 1e3f);
  EXPECT_EQ(temperature_from_raw(-100.0f), 1e-3f);
  EXPECT_FLOAT_EQ(temperature_from_raw(0.0f), 1.0f);
}

TEST(TempScore, MeanOfInverseTemperature) {
  TemperatureMap t(1, 2, {1.0f, 0.5f});
  EXPECT_DOUBLE_EQ(temp_uncertainty_score(t), 1.5);
  EXPECT_DOUBLE_EQ(temp_uncertainty_score(TemperatureMap::constant(3, 3, 1.0f)), 1.0);
}

TEST(TempScale, UnitTemperatureIsPlainSoftmax) {
  auto l = random_logits(3, 4, 5, 1);
  auto p = temp_scale_logits(l, TemperatureMap::constant(3, 4, 1.0f));
  auto q = softmax(l);
  for (std::size_t i = 0; i < p.size(); ++i) EXPECT_NEAR(p.values()[i], q.values()[i], 1e-6);
}

TEST(TempLoss, GradientMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto l = random_logits(3, 3, 4, seed);
    auto y = random_labels(3, 3, 4, seed + 1000);
    rng gen(seed + 2000);
    std::vector<double> t(9);
    for (double& v : t) v = gen.uniform(0.2, 3.0);
    auto base = temp_nll_loss(l, t, y);
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double numeric = five_point(
          [&](double d) {
            auto tp = t;
            tp[i] += d;
            return temp_nll_loss(l, tp, y).loss;
          },
          1e-4);
      EXPECT_LT(nnet::relative_error(base.grad_t[i], numeric), 1e-4) << "seed " << seed << " pixel " << i;
    }
  }
}

// Loss -> t = exp(raw) -> encoder/decoder parameters, as used in training.
TEST(TempLoss, EndToEndNetworkGradient) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto net = nnet::network_cast<double>(build_tempnet(modality::b, seed).net);
    // non-trivial head so the path through every layer is exercised; random
    // biases keep pre-activations off the relu kink at exactly zero
    for (auto& w : net.mutable_layers().back().weight) w *= 10.0;
    rng bias_gen(seed + 4);
    for (auto& layer : net.mutable_layers())
      for (auto& b : layer.bias) b = bias_gen.uniform(-0.3, 0.3);
    const auto x = nnet::to_tensor<double>(noise_image(4, 4, 1, seed + 1));
    const auto l = random_logits(4, 4, 3, seed + 2);
    const auto y = random_labels(4, 4, 3, seed + 3);
    auto loss_of = [&](const nnet::network<double>& n) {
      auto out = nnet::forward(n, x, nnet::pass_mode::eval).output;
      std::vector<double> t(out.data.size());
      for (std::size_t i = 0; i < t.size(); ++i) t[i] = std::exp(out.data[i]);
      return temp_nll_loss(l, t, y);
    };
    auto fr = nnet::forward(net, x, nnet::pass_mode::eval);
    std::vector<double> t(fr.output.data.size());
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = std::exp(fr.output.data[i]);
    auto tl = temp_nll_loss(l, t, y);
    nnet::tensor3<double> graw(1, 4, 4);
    for (std::size_t i = 0; i < t.size(); ++i) graw.data[i] = tl.grad_t[i] * t[i];
    auto g = nnet::backward(net, fr.cache, graw);

    double worst = 0.0;
    auto& layers = net.mutable_layers();
    for (std::size_t li = 0; li < layers.size(); ++li)
      for (int which = 0; which < 2; ++which) {
        auto& params = which == 0 ? layers[li].weight : layers[li].bias;
        const auto& gp = which == 0 ? g.weight[li] : g.bias[li];
        for (std::size_t i = 0; i < params.size(); ++i) {
          const double saved = params[i];
          const double numeric = five_point(
              [&](double d) {
                params[i] = saved + d;
                net.touch();
                return loss_of(net).loss;
              },
              3e-5);
          params[i] = saved;
          worst = std::max(worst, nnet::relative_error(gp[i], numeric));
        }
      }
    EXPECT_LT(worst, 1e-4) << "seed " << seed;
  }
}

TEST(TempTrain, PreconditionsAndIdentityFloor) {
  auto expert = build_expert(modality::b, 2, 0.25, 1);
  std::vector<labeled_image> set;
  for (std::uint64_t i = 0; i < 3; ++i) set.push_back({noise_image(8, 8, 1, i), random_labels(8, 8, 2, i)});
  temp_train_config cfg;
  cfg.steps = 10;
  cfg.validate_every = 5;
  cfg.batch = 2;
  EXPECT_THROW(train_tempnet(build_tempnet(modality::b), expert, set, set, cfg), validation_error);
  expert.trained = true;
  EXPECT_THROW(train_tempnet(build_tempnet(modality::a), expert, set, set, cfg), validation_error);
  auto res = train_tempnet(build_tempnet(modality::b, 2), expert, set, set, cfg);
  EXPECT_LE(res.val_nll, res.identity_val_nll);
  EXPECT_EQ(res.curve.size(), 3u);
  cfg.batch = 0;
  EXPECT_THROW(train_tempnet(build_tempnet(modality::b), expert, set, set, cfg), validation_error);
}

TEST(TempTrain, LearnsToSharpenUnderconfidentExpert) {
  // An expert whose logits are right but tiny: any t > 1 lowers the NLL.
  auto expert = build_expert(modality::b, 2, 0.0, 1);
  expert.trained = true;
  auto& layers = expert.net.mutable_layers();
  for (auto& l : layers) {
    std::fill(l.weight.begin(), l.weight.end(), 0.0f);
    std::fill(l.bias.begin(), l.bias.end(), 0.0f);
  }
  layers[0].weight[4] = 1.0f;            // hidden 0 = pixel
  layers[3].weight[4] = 1.0f;            // copy through
  layers[6].weight[0] = 0.5f;            // class 0 logit = 0.5 * pixel
  layers[6].bias[1] = 0.25f;             // class 1 logit constant
  std::vector<labeled_image> set;
  for (std::uint64_t i = 0; i < 6; ++i) {
    rng gen(i);
    std::vector<float> v(64);
    std::vector<std::uint8_t> lab(64);
    for (int k = 0; k < 64; ++k) {
      v[k] = gen.uniform() < 0.5 ? 0.0f : 1.0f;
      lab[k] = v[k] > 0.5f ? 0 : 1;
    }
    set.push_back({Image(8, 8, 1, std::move(v)), LabelMap(8, 8, 2, std::move(lab))});
  }
  temp_train_config cfg;
  cfg.steps = 200;
  cfg.validate_every = 50;
  cfg.learning_rate = 1e-2;
  cfg.batch = 2;
  auto res = train_tempnet(build_tempnet(modality::b, 4), expert, set, set, cfg);
  EXPECT_FALSE(res.fell_back_to_identity);
  EXPECT_LT(res.val_nll, res.identity_val_nll - 0.05);
}

TEST(TempNet, CheckpointRoundTrip) {
  auto tn = build_tempnet(modality::a, 5);
  const auto path = (std::filesystem::temp_directory_path() / "uno_test_tempnet.ckpt").string();
  save_tempnet(path, tn);
  auto back = load_tempnet(path);
  EXPECT_EQ(back.mod, modality::a);
  const auto x = noise_image(8, 8, 3, 2);
  EXPECT_EQ(temp_forward(back, x), temp_forward(tn, x));
}
