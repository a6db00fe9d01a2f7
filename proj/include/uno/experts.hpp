#pragma once

// Modality-specific segmentation experts with MC-dropout sampling.

#include <uno/nnet.hpp>
#include <uno/uncertainty.hpp>

#include <functional>

namespace uno {

enum class modality { a, b, ab };

inline std::string_view to_string(modality m) {
  switch (m) {
    case modality::a: return "a";
    case modality::b: return "b";
    case modality::ab: return "ab";
  }
  return "?";
}

inline modality modality_from_string(std::string_view s) {
  if (s == "a") return modality::a;
  if (s == "b") return modality::b;
  if (s == "ab") return modality::ab;
  throw validation_error("unknown modality: " + std::string(s));
}

// Appearance is RGB, range is a single channel; the multimodal input stacks both.
inline int modality_channels(modality m) {
  switch (m) {
    case modality::a: return 3;
    case modality::b: return 1;
    case modality::ab: return 4;
  }
  return 0;
}

struct labeled_image {
  Image image;
  LabelMap labels;
};

struct Expert {
  std::string id;
  modality mod = modality::a;
  int num_classes = 0;
  double dropout_rate = 0.0;
  bool trained = false;
  nnet::network<float> net;
};

inline constexpr int expert_hidden_channels = 16;
inline constexpr double default_dropout_rate = 0.25;
inline constexpr int default_mcdo_passes = 10;

// conv3x3(C->16), relu, dropout, conv3x3(16->16), relu, dropout, conv1x1(16->|C|)
inline Expert build_expert(modality mod, int num_classes, double dropout_rate = default_dropout_rate,
                           std::uint64_t init_seed = 0) {
  require(num_classes >= 2, "build_expert: need at least 2 classes");
  Expert e;
  e.id = "expert_" + std::string(to_string(mod));
  e.mod = mod;
  e.num_classes = num_classes;
  e.dropout_rate = dropout_rate;
  e.net = nnet::network<float>(modality_channels(mod));
  e.net.conv3x3(expert_hidden_channels).relu().dropout(dropout_rate)
      .conv3x3(expert_hidden_channels).relu().dropout(dropout_rate)
      .conv1x1(num_classes);
  e.net.initialize(init_seed);
  return e;
}

struct Prediction {
  LogitMap logits;
  ProbMap probs;
};

inline void check_input(const Expert& e, const Image& x) {
  require(x.channels() == modality_channels(e.mod),
          e.id + ": expected " + std::to_string(modality_channels(e.mod)) + " input channels, got " +
              std::to_string(x.channels()));
}

// Deterministic single pass with dropout off.
inline Prediction predict(const Expert& e, const Image& x) {
  check_input(e, x);
  auto fr = nnet::forward(e.net, nnet::to_tensor<float>(x), nnet::pass_mode::eval);
  auto logits = nnet::to_logit_map(fr.output);
  auto probs = softmax(logits);
  return {std::move(logits), std::move(probs)};
}

inline McdoSampleSet mcdo_sample(const Expert& e, const Image& x, int passes, std::uint64_t seed) {
  require(passes >= 2, "mcdo_sample: T must be >= 2");
  check_input(e, x);
  const auto input = nnet::to_tensor<float>(x);
  McdoSampleSet s;
  s.expert_id = e.id;
  s.samples.reserve(passes);
  for (int t = 0; t < passes; ++t) {
    auto fr = nnet::forward(e.net, input, nnet::pass_mode::mc_sample,
                            derive_seed(seed, static_cast<std::uint64_t>(t)));
    s.samples.push_back(softmax(nnet::to_logit_map(fr.output)));
  }
  return s;
}

// Mean per-pixel cross-entropy with dropout off.
inline double mean_loss(const Expert& e, std::span<const labeled_image> set) {
  require(!set.empty(), "mean_loss: empty set");
  double total = 0.0;
  for (const auto& s : set) {
    auto fr = nnet::forward(e.net, nnet::to_tensor<float>(s.image), nnet::pass_mode::eval);
    total += nnet::cross_entropy(fr.output, s.labels).loss;
  }
  return total / static_cast<double>(set.size());
}

inline double pixel_accuracy(const Expert& e, std::span<const labeled_image> set) {
  std::size_t correct = 0, total = 0;
  for (const auto& s : set) {
    auto pred = argmax_labels(predict(e, s.image).probs);
    for (std::size_t i = 0; i < pred.pixel_count(); ++i) correct += pred[i] == s.labels[i];
    total += pred.pixel_count();
  }
  return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
}

struct train_options {
  int steps = 2000;
  double learning_rate = 1e-3;
  int validate_every = 250;
  std::uint64_t seed = 0;
};

struct loss_point {
  int step = 0;
  double train_loss = 0.0;  // running mean since the previous point
  double val_loss = 0.0;
};

struct expert_training {
  Expert expert;  // best-validation checkpoint
  int best_step = 0;
  double best_val_loss = 0.0;
  std::vector<loss_point> curve;
};

// One randomly drawn image per Adam step; keeps the checkpoint with the lowest
// validation loss (checked every `validate_every` steps and at the end).
inline expert_training train_expert(Expert expert, std::span<const labeled_image> train,
                                    std::span<const labeled_image> val, const train_options& opt) {
  require(!train.empty() && !val.empty(), "train_expert: empty dataset");
  require(opt.steps >= 0 && opt.validate_every >= 1, "train_expert: invalid options");
  for (const auto& s : train) check_input(expert, s.image);

  expert_training out;
  out.best_val_loss = mean_loss(expert, val);
  out.expert = expert;
  out.curve.push_back({0, 0.0, out.best_val_loss});

  auto state = nnet::adam_state<float>::for_network(expert.net, opt.learning_rate);
  rng pick(derive_seed(opt.seed, 0x7261696eULL));
  double running = 0.0;
  int running_n = 0;
  for (int step = 1; step <= opt.steps; ++step) {
    const auto& sample = train[static_cast<std::size_t>(pick.uniform_int(0, static_cast<int>(train.size()) - 1))];
    auto fr = nnet::forward(expert.net, nnet::to_tensor<float>(sample.image), nnet::pass_mode::train,
                            derive_seed(opt.seed, static_cast<std::uint64_t>(step)));
    auto lr = nnet::cross_entropy(fr.output, sample.labels);
    running += lr.loss;
    ++running_n;
    auto grads = nnet::backward(expert.net, fr.cache, lr.gradient);
    nnet::adam_step(state, expert.net, grads);

    if (step % opt.validate_every == 0 || step == opt.steps) {
      const double vl = mean_loss(expert, val);
      if (!std::isfinite(vl)) throw numerical_error("train_expert: validation loss diverged");
      out.curve.push_back({step, running / running_n, vl});
      running = 0.0;
      running_n = 0;
      if (vl <= out.best_val_loss) {
        out.best_val_loss = vl;
        out.best_step = step;
        out.expert = expert;
        out.expert.trained = true;
      }
    }
  }
  out.expert.net.touch();
  return out;
}

inline void save_expert(const std::string& path, const Expert& e) {
  auto out = detail::open_out(path);
  nnet::write_checkpoint(out, e.net, 0,
                         {{"kind", "expert"},
                          {"id", e.id},
                          {"modality", to_string(e.mod)},
                          {"num_classes", e.num_classes},
                          {"dropout_rate", e.dropout_rate},
                          {"trained", e.trained}});
}

inline Expert load_expert(const std::string& path) {
  auto in = detail::open_in(path);
  nnet::checkpoint_header h;
  Expert e;
  e.net = nnet::read_checkpoint<float>(in, &h);
  require(h.meta.value("kind", "") == "expert", path + ": not an expert checkpoint");
  e.id = h.meta.at("id").get<std::string>();
  e.mod = modality_from_string(h.meta.at("modality").get<std::string>());
  e.num_classes = h.meta.at("num_classes").get<int>();
  e.dropout_rate = h.meta.at("dropout_rate").get<double>();
  e.trained = h.meta.at("trained").get<bool>();
  return e;
}

}  // namespace uno
