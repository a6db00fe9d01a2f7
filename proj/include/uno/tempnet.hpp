#pragma once

// Spatial temperature network: a two-level conv/pool encoder-decoder that maps
// an expert's input image to a per-pixel positive multiplier on its logits.
// Trained by per-pixel NLL with the expert frozen.

#include <uno/experts.hpp>

namespace uno {

struct TempNet {
  modality mod = modality::a;
  nnet::network<float> net;
};

inline constexpr int tempnet_channels = 8;
inline constexpr double tempnet_head_init_scale = 0.1;

// encoder 2x[conv3x3, relu, maxpool2], decoder 2x[upsample2, conv3x3, relu],
// head conv1x1 -> 1 channel. Head weights are shrunk so t starts near 1.
inline TempNet build_tempnet(modality mod, std::uint64_t init_seed = 0) {
  TempNet tn;
  tn.mod = mod;
  tn.net = nnet::network<float>(modality_channels(mod));
  tn.net.conv3x3(tempnet_channels).relu().maxpool2()
      .conv3x3(tempnet_channels).relu().maxpool2()
      .upsample2().conv3x3(tempnet_channels).relu()
      .upsample2().conv3x3(tempnet_channels).relu()
      .conv1x1(1);
  tn.net.initialize(init_seed);
  auto& head = tn.net.mutable_layers().back();
  for (auto& w : head.weight) w *= static_cast<float>(tempnet_head_init_scale);
  return tn;
}

// A TempNet whose output is exactly 1 everywhere.
inline void make_identity(TempNet& tn) {
  auto& head = tn.net.mutable_layers().back();
  std::fill(head.weight.begin(), head.weight.end(), 0.0f);
  std::fill(head.bias.begin(), head.bias.end(), 0.0f);
}

inline float temperature_from_raw(float raw) {
  return std::clamp(std::exp(raw), TemperatureMap::min_value, TemperatureMap::max_value);
}

inline TemperatureMap temp_forward(const TempNet& tn, const Image& x) {
  require(x.channels() == modality_channels(tn.mod), "temp_forward: input channel mismatch");
  auto fr = nnet::forward(tn.net, nnet::to_tensor<float>(x), nnet::pass_mode::eval);
  std::vector<float> t(fr.output.data.size());
  std::transform(fr.output.data.begin(), fr.output.data.end(), t.begin(), temperature_from_raw);
  return TemperatureMap(x.height(), x.width(), std::move(t));
}

// softmax(l_ij * t_ij) per pixel.
inline ProbMap temp_scale_logits(const LogitMap& l, const TemperatureMap& t) {
  require(same_spatial_shape(l, t), "temp_scale_logits: shape mismatch");
  const auto tv = t.values();
  return scaled_softmax(l, [&](std::size_t i) { return static_cast<double>(tv[i]); });
}

// Summed per-pixel negative log-likelihood of the true class.
inline double nll_loss(const ProbMap& p, const LabelMap& y) {
  require(same_spatial_shape(p, y) && p.num_classes() == y.num_classes(), "nll_loss: shape mismatch");
  double loss = 0.0;
  for (std::size_t i = 0; i < p.pixel_count(); ++i)
    loss -= std::log(std::max(static_cast<double>(p.pixel(i)[y[i]]), 1e-12));
  return loss;
}

struct temp_loss {
  double loss = 0.0;
  std::vector<double> grad_t;  // dL/dt_ij
};

// L = -sum_ij ln softmax(l_ij * t_ij)[y_ij] and its gradient wrt each t_ij,
// dL/dt = sum_c (p_c - [c == y]) * l_c.
inline temp_loss temp_nll_loss(const LogitMap& l, std::span<const double> t, const LabelMap& y) {
  require(same_spatial_shape(l, y) && t.size() == l.pixel_count(), "temp_nll_loss: shape mismatch");
  const int nc = l.num_classes();
  temp_loss out;
  out.grad_t.resize(l.pixel_count());
  std::vector<double> z(nc);
  for (std::size_t i = 0; i < l.pixel_count(); ++i) {
    auto px = l.pixel(i);
    for (int c = 0; c < nc; ++c) z[c] = static_cast<double>(px[c]) * t[i];
    const double mx = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (double v : z) sum += std::exp(v - mx);
    const double lse = mx + std::log(sum);
    const int label = y[i];
    out.loss += lse - z[label];
    double g = 0.0;
    for (int c = 0; c < nc; ++c) g += (std::exp(z[c] - lse) - (c == label ? 1.0 : 0.0)) * px[c];
    out.grad_t[i] = g;
  }
  return out;
}

inline temp_loss temp_nll_loss(const LogitMap& l, const TemperatureMap& t, const LabelMap& y) {
  std::vector<double> tv(t.values().begin(), t.values().end());
  return temp_nll_loss(l, tv, y);
}

// Ave.Temp image score: mean of 1/t, so lower temperature reads as more uncertain.
inline double temp_uncertainty_score(const TemperatureMap& t) {
  require(t.pixel_count() > 0, "temp_uncertainty_score: empty map");
  double sum = 0.0;
  for (float v : t.values()) sum += 1.0 / static_cast<double>(v);
  return sum / static_cast<double>(t.pixel_count());
}

struct temp_train_config {
  int steps = 3000;
  int batch = 4;  // images per step
  double learning_rate = 1e-3;
  int validate_every = 500;
  std::uint64_t seed = 0;
};

struct tempnet_training {
  TempNet tempnet;
  double val_nll = 0.0;           // mean per-pixel NLL of the returned TempNet
  double identity_val_nll = 0.0;  // same with t = 1
  bool fell_back_to_identity = false;
  std::vector<loss_point> curve;
};

namespace detail {

struct frozen_sample {
  const labeled_image* sample;
  LogitMap logits;
};

inline std::vector<frozen_sample> freeze_logits(const Expert& e, std::span<const labeled_image> set) {
  std::vector<frozen_sample> out;
  out.reserve(set.size());
  for (const auto& s : set) out.push_back({&s, predict(e, s.image).logits});
  return out;
}

inline double mean_temp_nll(const TempNet& tn, const std::vector<frozen_sample>& set, bool identity) {
  double total = 0.0;
  std::size_t pixels = 0;
  for (const auto& f : set) {
    const auto t = identity ? TemperatureMap::constant(f.logits.height(), f.logits.width(), 1.0f)
                            : temp_forward(tn, f.sample->image);
    total += temp_nll_loss(f.logits, t, f.sample->labels).loss;
    pixels += f.logits.pixel_count();
  }
  return total / static_cast<double>(pixels);
}

}  // namespace detail

// Trains on the frozen expert's logits. Returns the best checkpoint on `val`;
// if none beats t = 1 there, the head is zeroed so the result is exactly t = 1.
inline tempnet_training train_tempnet(TempNet tn, const Expert& expert,
                                      std::span<const labeled_image> train,
                                      std::span<const labeled_image> val,
                                      const temp_train_config& cfg) {
  require(expert.trained, "train_tempnet: expert must be trained first");
  require(tn.mod == expert.mod, "train_tempnet: modality mismatch");
  require(!train.empty() && !val.empty(), "train_tempnet: empty dataset");
  require(cfg.batch >= 1 && cfg.steps >= 0, "train_tempnet: batch must be >= 1");

  const auto train_set = detail::freeze_logits(expert, train);
  const auto val_set = detail::freeze_logits(expert, val);

  tempnet_training out;
  out.identity_val_nll = detail::mean_temp_nll(tn, val_set, true);
  out.tempnet = tn;
  out.val_nll = detail::mean_temp_nll(tn, val_set, false);
  out.curve.push_back({0, 0.0, out.val_nll});

  auto state = nnet::adam_state<float>::for_network(tn.net, cfg.learning_rate);
  rng pick(derive_seed(cfg.seed, 0x74656d70ULL));
  double running = 0.0;
  int running_n = 0;
  for (int step = 1; step <= cfg.steps; ++step) {
    auto grads = nnet::gradients<float>::zeros_like(tn.net);
    for (int b = 0; b < cfg.batch; ++b) {
      const auto& f = train_set[static_cast<std::size_t>(pick.uniform_int(0, static_cast<int>(train_set.size()) - 1))];
      auto fr = nnet::forward(tn.net, nnet::to_tensor<float>(f.sample->image), nnet::pass_mode::train,
                              derive_seed(cfg.seed, static_cast<std::uint64_t>(step), static_cast<std::uint64_t>(b)));
      const auto& raw = fr.output.data;
      std::vector<double> t(raw.size());
      std::transform(raw.begin(), raw.end(), t.begin(), [](float r) { return temperature_from_raw(r); });
      auto loss = temp_nll_loss(f.logits, t, f.sample->labels);
      const double inv_n = 1.0 / static_cast<double>(t.size());
      if (!std::isfinite(loss.loss)) throw numerical_error("train_tempnet: non-finite loss");
      running += loss.loss * inv_n;
      ++running_n;

      // dt/draw = t inside the clamp, 0 where clamped.
      nnet::tensor3<float> graw(1, fr.output.height, fr.output.width);
      for (std::size_t i = 0; i < t.size(); ++i) {
        const float e = std::exp(raw[i]);
        const bool clamped = !(e > TemperatureMap::min_value && e < TemperatureMap::max_value);
        graw.data[i] = clamped ? 0.0f : static_cast<float>(loss.grad_t[i] * t[i] * inv_n);
      }
      grads.accumulate(nnet::backward(tn.net, fr.cache, graw), 1.0f / static_cast<float>(cfg.batch));
    }
    nnet::adam_step(state, tn.net, grads);

    if (step % cfg.validate_every == 0 || step == cfg.steps) {
      const double vl = detail::mean_temp_nll(tn, val_set, false);
      if (!std::isfinite(vl)) throw numerical_error("train_tempnet: validation NLL diverged");
      out.curve.push_back({step, running / running_n, vl});
      running = 0.0;
      running_n = 0;
      if (vl <= out.val_nll) {
        out.val_nll = vl;
        out.tempnet = tn;
      }
    }
  }
  if (out.val_nll > out.identity_val_nll) {
    make_identity(out.tempnet);
    out.val_nll = out.identity_val_nll;
    out.fell_back_to_identity = true;
  }
  out.tempnet.net.touch();
  return out;
}

inline void save_tempnet(const std::string& path, const TempNet& tn) {
  auto out = detail::open_out(path);
  nnet::write_checkpoint(out, tn.net, 0, {{"kind", "tempnet"}, {"modality", to_string(tn.mod)}});
}

inline TempNet load_tempnet(const std::string& path) {
  auto in = detail::open_in(path);
  nnet::checkpoint_header h;
  TempNet tn;
  tn.net = nnet::read_checkpoint<float>(in, &h);
  require(h.meta.value("kind", "") == "tempnet", path + ": not a TempNet checkpoint");
  tn.mod = modality_from_string(h.meta.at("modality").get<std::string>());
  return tn;
}

}  // namespace uno
