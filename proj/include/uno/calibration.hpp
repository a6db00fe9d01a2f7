#pragma once

// Training-set uncertainty statistics, deviation ratios and uncertainty-scaled
// softmax; plus the scalar temperature-scaling baseline.

#include <uno/uncertainty.hpp>

#include <json.hpp>

namespace uno {

struct DeviationStats {
  std::string expert_id;
  metric_kind metric = metric_kind::entropy;
  double mu_train = 0.0;
  double sigma_train = 0.0;
  std::size_t num_images = 0;
};

class DeviationRatio {
 public:
  constexpr DeviationRatio() = default;
  explicit DeviationRatio(double value, bool degenerate = false)
      : value_(value), degenerate_(degenerate) {
    require(value > 0.0 && value <= 1.0, "DeviationRatio: value must lie in (0, 1]");
  }
  double value() const { return value_; }
  // Set when the training mean was ~0 and the epsilon guard was used.
  bool degenerate() const { return degenerate_; }

 private:
  double value_ = 1.0;
  bool degenerate_ = false;
};

// Mean and population standard deviation of per-image scores.
inline DeviationStats fit_stats(std::span<const double> per_image_scores, std::string expert_id = {},
                                metric_kind metric = metric_kind::entropy) {
  require(per_image_scores.size() >= 2, "fit_stats: need at least 2 scores");
  const double n = static_cast<double>(per_image_scores.size());
  double mean = 0.0;
  for (double s : per_image_scores) mean += s;
  mean /= n;
  double var = 0.0;
  for (double s : per_image_scores) var += (s - mean) * (s - mean);
  var /= n;
  return {std::move(expert_id), metric, mean, std::sqrt(var), per_image_scores.size()};
}

inline constexpr double degenerate_mu_epsilon = 1e-9;

// delta = mu / (max(0, mu_test - mu - sigma) + mu)
inline DeviationRatio deviation_ratio(double mu_test, const DeviationStats& stats) {
  const double sigma = stats.sigma_train;
  if (stats.mu_train <= degenerate_mu_epsilon) {
    if (mu_test <= sigma) return DeviationRatio(1.0, true);
    const double mu = degenerate_mu_epsilon;
    const double excess = std::max(0.0, mu_test - mu - sigma);
    return DeviationRatio(std::max(mu / (excess + mu), std::numeric_limits<double>::min()), true);
  }
  const double mu = stats.mu_train;
  const double excess = std::max(0.0, mu_test - mu - sigma);
  return DeviationRatio(mu / (excess + mu));
}

inline DeviationRatio combine_min(std::span<const DeviationRatio> ratios) {
  require(!ratios.empty(), "combine_min: empty list");
  return *std::min_element(ratios.begin(), ratios.end(),
                           [](const auto& a, const auto& b) { return a.value() < b.value(); });
}

inline DeviationRatio combine_min(std::initializer_list<DeviationRatio> ratios) {
  return combine_min(std::span<const DeviationRatio>(ratios.begin(), ratios.size()));
}

// The multimodal expert has no statistics of its own; it takes the minimum of
// the per-expert minima of the modalities it consumes.
inline DeviationRatio multimodal_min(std::span<const DeviationRatio> per_expert_min) {
  return combine_min(per_expert_min);
}

inline DeviationRatio multimodal_min(std::initializer_list<DeviationRatio> per_expert_min) {
  return combine_min(per_expert_min);
}

// softmax(logits * delta) per pixel; delta < 1 flattens toward uniform.
inline ProbMap scale_logits(const LogitMap& l, DeviationRatio delta) {
  const double d = delta.value();
  return scaled_softmax(l, [d](std::size_t) { return d; });
}

inline std::vector<double> scale_logits(std::span<const double> logits, double delta) {
  std::vector<double> z(logits.begin(), logits.end());
  for (double& v : z) v *= delta;
  return softmax(z);
}

// ---------------------------------------------------------------------------
// Scalar temperature scaling: T minimizing the NLL of softmax(l / T).

struct logit_sample {
  const LogitMap* logits;
  const LabelMap* labels;
};

inline double scalar_temperature_nll(std::span<const logit_sample> set, double temperature) {
  const double inv_t = 1.0 / temperature;
  double total = 0.0;
  for (const auto& s : set) {
    const int nc = s.logits->num_classes();
    for (std::size_t i = 0; i < s.logits->pixel_count(); ++i) {
      auto px = s.logits->pixel(i);
      double mx = -std::numeric_limits<double>::infinity();
      for (int c = 0; c < nc; ++c) mx = std::max(mx, px[c] * inv_t);
      double sum = 0.0;
      for (int c = 0; c < nc; ++c) sum += std::exp(px[c] * inv_t - mx);
      total += mx + std::log(sum) - px[(*s.labels)[i]] * inv_t;
    }
  }
  return total;
}

inline constexpr double scalar_temperature_lo = 0.05;
inline constexpr double scalar_temperature_hi = 20.0;

// Golden-section search on [0.05, 20]; never returns a T worse than T = 1.
inline double fit_scalar_temperature(std::span<const logit_sample> set) {
  require(!set.empty(), "fit_scalar_temperature: empty validation set");
  const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = scalar_temperature_lo, b = scalar_temperature_hi;
  double c = b - invphi * (b - a), d = a + invphi * (b - a);
  double fc = scalar_temperature_nll(set, c), fd = scalar_temperature_nll(set, d);
  for (int it = 0; it < 80 && b - a > 1e-6; ++it) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - invphi * (b - a);
      fc = scalar_temperature_nll(set, c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + invphi * (b - a);
      fd = scalar_temperature_nll(set, d);
    }
  }
  const double t = 0.5 * (a + b);
  return scalar_temperature_nll(set, t) <= scalar_temperature_nll(set, 1.0) ? t : 1.0;
}

// ---------------------------------------------------------------------------
// JSON persistence: {expert, metric, mu_train, sigma_train, n}

inline nlohmann::json to_json(const DeviationStats& s) {
  return {{"expert", s.expert_id},
          {"metric", to_string(s.metric)},
          {"mu_train", s.mu_train},
          {"sigma_train", s.sigma_train},
          {"n", s.num_images}};
}

inline DeviationStats stats_from_json(const nlohmann::json& j) {
  DeviationStats s;
  s.expert_id = j.at("expert").get<std::string>();
  s.metric = metric_from_string(j.at("metric").get<std::string>());
  s.mu_train = j.at("mu_train").get<double>();
  s.sigma_train = j.at("sigma_train").get<double>();
  s.num_images = j.at("n").get<std::size_t>();
  require(s.sigma_train >= 0.0 && s.num_images >= 2, "stats: invalid record for " + s.expert_id);
  return s;
}

}  // namespace uno
