#pragma once

// Per-pixel uncertainty metrics (natural log, nats) and image-level scores.

#include <uno/core.hpp>

namespace uno {

enum class metric_kind { entropy, predictive_entropy, mutual_information, ave_temp };

inline std::string_view to_string(metric_kind m) {
  switch (m) {
    case metric_kind::entropy: return "ave_en";
    case metric_kind::predictive_entropy: return "ave_preen";
    case metric_kind::mutual_information: return "ave_mi";
    case metric_kind::ave_temp: return "ave_temp";
  }
  return "?";
}

inline metric_kind metric_from_string(std::string_view s) {
  for (auto m : {metric_kind::entropy, metric_kind::predictive_entropy,
                 metric_kind::mutual_information, metric_kind::ave_temp})
    if (to_string(m) == s) return m;
  throw validation_error("unknown metric: " + std::string(s));
}

// Metrics that need several stochastic passes.
inline bool needs_mcdo(metric_kind m) {
  return m == metric_kind::predictive_entropy || m == metric_kind::mutual_information;
}

struct McdoSampleSet {
  std::string expert_id;
  std::vector<ProbMap> samples;

  int passes() const { return static_cast<int>(samples.size()); }
};

namespace detail {

inline constexpr double prob_floor = 1e-12;

// p ln p with 0 ln 0 = 0
inline double plogp(double p) { return p > 0.0 ? p * std::log(std::max(p, prob_floor)) : 0.0; }

inline void check_samples(const McdoSampleSet& s) {
  require(s.passes() >= 2, "MCDO sample set needs T >= 2");
  for (const auto& p : s.samples)
    require(same_spatial_shape(p, s.samples.front()) &&
                p.num_classes() == s.samples.front().num_classes(),
            "MCDO samples differ in shape");
}

}  // namespace detail

inline double entropy(std::span<const double> p) {
  double h = 0.0;
  for (double v : p) h -= detail::plogp(v);
  return std::max(h, 0.0);
}

inline UncertaintyMap entropy(const ProbMap& p) {
  std::vector<float> out(p.pixel_count());
  for (std::size_t i = 0; i < p.pixel_count(); ++i) {
    double h = 0.0;
    for (float v : p.pixel(i)) h -= detail::plogp(v);
    out[i] = static_cast<float>(std::max(h, 0.0));
  }
  return UncertaintyMap(p.height(), p.width(), std::move(out));
}

// Per-pixel kernels over T sampled distributions (rows of `samples`).

// Entropy of the Monte-Carlo mean distribution.
inline double predictive_entropy(std::span<const std::vector<double>> samples) {
  require(samples.size() >= 2, "predictive_entropy: needs T >= 2");
  std::vector<double> mean(samples.front().size(), 0.0);
  for (const auto& p : samples)
    for (std::size_t c = 0; c < mean.size(); ++c) mean[c] += p[c];
  for (double& m : mean) m /= static_cast<double>(samples.size());
  return entropy(mean);
}

// Predictive entropy minus the mean per-pass entropy, floored at 0.
inline double mutual_information(std::span<const std::vector<double>> samples) {
  double expected_plogp = 0.0;
  for (const auto& p : samples)
    for (double v : p) expected_plogp += detail::plogp(v);
  const double mi = predictive_entropy(samples) + expected_plogp / static_cast<double>(samples.size());
  return std::max(mi, 0.0);
}

namespace detail {

template <typename Kernel>
UncertaintyMap per_pixel_over_samples(const McdoSampleSet& s, Kernel&& kernel) {
  check_samples(s);
  const auto& first = s.samples.front();
  const int nc = first.num_classes();
  std::vector<float> out(first.pixel_count());
  std::vector<std::vector<double>> px(s.samples.size(), std::vector<double>(nc));
  for (std::size_t i = 0; i < first.pixel_count(); ++i) {
    for (std::size_t t = 0; t < s.samples.size(); ++t) {
      auto src = s.samples[t].pixel(i);
      std::copy(src.begin(), src.end(), px[t].begin());
    }
    out[i] = static_cast<float>(kernel(std::span<const std::vector<double>>(px)));
  }
  return UncertaintyMap(first.height(), first.width(), std::move(out));
}

}  // namespace detail

inline UncertaintyMap predictive_entropy(const McdoSampleSet& s) {
  return detail::per_pixel_over_samples(
      s, [](std::span<const std::vector<double>> px) { return predictive_entropy(px); });
}

inline UncertaintyMap mutual_information(const McdoSampleSet& s) {
  return detail::per_pixel_over_samples(
      s, [](std::span<const std::vector<double>> px) { return mutual_information(px); });
}

// Mean over all pixels, accumulated in double.
template <typename Field>
double image_score(const Field& u) {
  require(u.pixel_count() > 0, "image_score: empty map");
  double sum = 0.0;
  for (float v : u.values()) sum += v;
  return sum / static_cast<double>(u.size());
}

}  // namespace uno
