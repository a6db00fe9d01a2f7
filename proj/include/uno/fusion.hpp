#pragma once

// Late fusion of expert probability maps: Noisy-Or, product, and the
// uncertainty-aware pipelines built on them.

#include <uno/calibration.hpp>

#include <optional>

namespace uno {

enum class fusion_method { soft_mult, soft_mult_t, noisy_or, noisy_or_t, uno, uno_pp };

inline std::string_view to_string(fusion_method m) {
  switch (m) {
    case fusion_method::soft_mult: return "softmult";
    case fusion_method::soft_mult_t: return "softmult-t";
    case fusion_method::noisy_or: return "noisyor";
    case fusion_method::noisy_or_t: return "noisyor-t";
    case fusion_method::uno: return "uno";
    case fusion_method::uno_pp: return "unopp";
  }
  return "?";
}

inline fusion_method fusion_method_from_string(std::string_view s) {
  for (auto m : {fusion_method::soft_mult, fusion_method::soft_mult_t, fusion_method::noisy_or,
                 fusion_method::noisy_or_t, fusion_method::uno, fusion_method::uno_pp})
    if (to_string(m) == s) return m;
  throw validation_error("unknown fusion method: " + std::string(s));
}

inline constexpr std::array<fusion_method, 6> all_fusion_methods{
    fusion_method::soft_mult, fusion_method::soft_mult_t, fusion_method::noisy_or,
    fusion_method::noisy_or_t, fusion_method::uno, fusion_method::uno_pp};

struct FusionEntry {
  std::string expert_id;
  ProbMap probs;
  bool leak = false;
};

inline constexpr double noisy_or_clamp = 1e-9;
inline constexpr double zero_mass_guard = 1e-12;

// ---------------------------------------------------------------------------
// Per-pixel kernels (one distribution per expert)

// I_c = 1 - prod_i (1 - p_ic), probabilities clamped to [1e-9, 1 - 1e-9].
inline std::vector<double> noisy_or_scores(std::span<const std::vector<double>> experts) {
  require(!experts.empty(), "noisy_or: no experts");
  const std::size_t nc = experts.front().size();
  std::vector<double> miss(nc, 1.0);
  for (const auto& p : experts) {
    require(p.size() == nc, "noisy_or: class count mismatch");
    for (std::size_t c = 0; c < nc; ++c)
      miss[c] *= 1.0 - std::clamp(p[c], noisy_or_clamp, 1.0 - noisy_or_clamp);
  }
  for (double& m : miss) m = 1.0 - m;
  return miss;
}

inline std::vector<double> soft_mult_scores(std::span<const std::vector<double>> experts) {
  require(!experts.empty(), "soft_mult: no experts");
  const std::size_t nc = experts.front().size();
  std::vector<double> prod(nc, 1.0);
  for (const auto& p : experts) {
    require(p.size() == nc, "soft_mult: class count mismatch");
    for (std::size_t c = 0; c < nc; ++c) prod[c] *= p[c];
  }
  return prod;
}

// Divides by the total; uniform if the total mass is below 1e-12.
inline std::vector<double> normalize_scores(std::vector<double> scores) {
  double sum = 0.0;
  for (double v : scores) sum += v;
  if (!(sum >= zero_mass_guard)) {
    std::fill(scores.begin(), scores.end(), 1.0 / static_cast<double>(scores.size()));
    return scores;
  }
  for (double& v : scores) v /= sum;
  return scores;
}

inline std::vector<double> noisy_or(std::span<const std::vector<double>> experts) {
  return normalize_scores(noisy_or_scores(experts));
}

inline std::vector<double> soft_mult(std::span<const std::vector<double>> experts) {
  return normalize_scores(soft_mult_scores(experts));
}

// ---------------------------------------------------------------------------
// Map-level fusion

namespace detail {

template <typename PixelFusion>
ProbMap fuse_maps(std::span<const FusionEntry> inputs, PixelFusion&& fuse) {
  require(!inputs.empty(), "fusion: no inputs");
  const auto& first = inputs.front().probs;
  for (const auto& e : inputs)
    require(same_spatial_shape(e.probs, first) && e.probs.num_classes() == first.num_classes(),
            "fusion: shape mismatch for " + e.expert_id);
  const int nc = first.num_classes();
  std::vector<std::vector<double>> px(inputs.size(), std::vector<double>(nc));
  std::vector<float> out(first.size());
  for (std::size_t i = 0; i < first.pixel_count(); ++i) {
    for (std::size_t k = 0; k < inputs.size(); ++k) {
      auto src = inputs[k].probs.pixel(i);
      std::copy(src.begin(), src.end(), px[k].begin());
    }
    const auto fused = fuse(std::span<const std::vector<double>>(px));
    for (int c = 0; c < nc; ++c) out[i * nc + c] = static_cast<float>(fused[c]);
  }
  return ProbMap(first.height(), first.width(), nc, std::move(out));
}

}  // namespace detail

inline ProbMap noisy_or(std::span<const FusionEntry> inputs) {
  return detail::fuse_maps(inputs, [](std::span<const std::vector<double>> px) { return noisy_or(px); });
}

inline ProbMap soft_mult(std::span<const FusionEntry> inputs) {
  return detail::fuse_maps(inputs, [](std::span<const std::vector<double>> px) { return soft_mult(px); });
}

struct ExpertLogits {
  std::string expert_id;
  LogitMap logits;
};

// Each expert's logits are scaled by its own delta_min; the optional leak
// (multimodal) expert by its multimodal delta. Then Noisy-Or over all.
inline ProbMap fuse_uno(std::span<const ExpertLogits> experts, std::span<const DeviationRatio> deltas,
                        fusion_method method, const ExpertLogits* leak = nullptr,
                        std::optional<DeviationRatio> leak_delta = std::nullopt) {
  require(method == fusion_method::uno || method == fusion_method::uno_pp,
          "fuse_uno: method must be uno or unopp");
  require(experts.size() == deltas.size(), "fuse_uno: one delta per expert required");
  std::vector<FusionEntry> entries;
  for (std::size_t i = 0; i < experts.size(); ++i)
    entries.push_back({experts[i].expert_id, scale_logits(experts[i].logits, deltas[i]), false});
  if (method == fusion_method::uno_pp) {
    require(leak != nullptr, "fuse_uno: unopp requires a leak expert");
    const DeviationRatio d = leak_delta ? *leak_delta : multimodal_min(deltas);
    entries.push_back({leak->expert_id, scale_logits(leak->logits, d), true});
  }
  return noisy_or(entries);
}

// softmax (at l / T_cal for the -t variants) per expert, then product or Noisy-Or.
inline ProbMap fuse_baseline(std::span<const ExpertLogits> experts, fusion_method method,
                             std::span<const double> t_cal = {}) {
  const bool scaled = method == fusion_method::soft_mult_t || method == fusion_method::noisy_or_t;
  require(method != fusion_method::uno && method != fusion_method::uno_pp,
          "fuse_baseline: not a baseline method");
  require(!scaled || t_cal.size() == experts.size(), "fuse_baseline: missing T_cal for a -t method");
  std::vector<FusionEntry> entries;
  for (std::size_t i = 0; i < experts.size(); ++i) {
    if (scaled) {
      require(t_cal[i] > 0.0, "fuse_baseline: T_cal must be positive");
      const double inv = 1.0 / t_cal[i];
      entries.push_back({experts[i].expert_id, scaled_softmax(experts[i].logits, [inv](std::size_t) { return inv; }), false});
    } else {
      entries.push_back({experts[i].expert_id, softmax(experts[i].logits), false});
    }
  }
  const bool product = method == fusion_method::soft_mult || method == fusion_method::soft_mult_t;
  return product ? soft_mult(entries) : noisy_or(entries);
}

}  // namespace uno
