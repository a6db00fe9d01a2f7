#pragma once

// Benchmark harness: confusion matrices and mIoU, the train / calibrate /
// evaluate pipeline, and result tables.

#include <uno/fusion.hpp>
#include <uno/scenegen.hpp>
#include <uno/tempnet.hpp>

#include <cstdio>
#include <map>

namespace uno {

// ---------------------------------------------------------------------------
// Confusion matrix and mIoU

class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int num_classes = scene_num_classes)
      : num_classes_(num_classes), counts_(static_cast<std::size_t>(num_classes) * num_classes, 0) {
    require(num_classes >= 1, "ConfusionMatrix: need at least one class");
  }

  int num_classes() const { return num_classes_; }
  // rows = ground truth, cols = prediction
  std::uint64_t at(int gt, int pred) const { return counts_[static_cast<std::size_t>(gt) * num_classes_ + pred]; }
  std::uint64_t& at(int gt, int pred) { return counts_[static_cast<std::size_t>(gt) * num_classes_ + pred]; }
  std::uint64_t total() const { return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0}); }
  bool diagonal() const {
    for (int g = 0; g < num_classes_; ++g)
      for (int p = 0; p < num_classes_; ++p)
        if (g != p && at(g, p) != 0) return false;
    return true;
  }

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

 private:
  int num_classes_;
  std::vector<std::uint64_t> counts_;
};

inline void accumulate_confusion(const LabelMap& pred, const LabelMap& gt, ConfusionMatrix& cm) {
  require(same_spatial_shape(pred, gt), "accumulate_confusion: shape mismatch");
  for (std::size_t i = 0; i < gt.pixel_count(); ++i) {
    require(gt[i] < cm.num_classes() && pred[i] < cm.num_classes(), "accumulate_confusion: label out of range");
    ++cm.at(gt[i], pred[i]);
  }
}

// Mean over classes of TP / (TP + FP + FN); classes absent from both ground
// truth and prediction are left out of the mean.
inline double mean_iou(const ConfusionMatrix& cm) {
  double sum = 0.0;
  int present = 0;
  for (int c = 0; c < cm.num_classes(); ++c) {
    std::uint64_t tp = cm.at(c, c), fp = 0, fn = 0;
    for (int k = 0; k < cm.num_classes(); ++k) {
      if (k == c) continue;
      fp += cm.at(k, c);
      fn += cm.at(c, k);
    }
    const std::uint64_t denom = tp + fp + fn;
    if (denom == 0) continue;
    sum += static_cast<double>(tp) / static_cast<double>(denom);
    ++present;
  }
  require(present > 0, "mean_iou: no class present in ground truth or prediction");
  return sum / present;
}

// ---------------------------------------------------------------------------
// Configuration

struct pipeline_config {
  dataset_config data;
  int expert_steps = 1500;
  int tempnet_steps = 3000;
  int tempnet_batch = 4;
  double learning_rate = 1e-3;
  double dropout_rate = default_dropout_rate;
  int mcdo_passes = default_mcdo_passes;
  // Metrics whose deviation ratios feed the per-expert min in UNO / UNO++.
  std::vector<metric_kind> fusion_metrics{metric_kind::ave_temp, metric_kind::entropy};
  // Also compute the MC-dropout metrics (stats and deviation table).
  bool mcdo_metrics = true;
  std::vector<fusion_method> methods{all_fusion_methods.begin(), all_fusion_methods.end()};
  std::uint64_t seed = 0;
};

inline nlohmann::json to_json(const pipeline_config& c) {
  nlohmann::json metrics = nlohmann::json::array(), methods = nlohmann::json::array();
  for (auto m : c.fusion_metrics) metrics.push_back(to_string(m));
  for (auto m : c.methods) methods.push_back(to_string(m));
  return {{"seed", c.seed},
          {"train", c.data.train},
          {"val", c.data.val},
          {"test", c.data.test},
          {"fog_severity", c.data.fog_severity},
          {"height", c.data.scene.height},
          {"width", c.data.scene.width},
          {"min_objects", c.data.scene.min_objects},
          {"max_objects", c.data.scene.max_objects},
          {"expert_steps", c.expert_steps},
          {"tempnet_steps", c.tempnet_steps},
          {"tempnet_batch", c.tempnet_batch},
          {"learning_rate", c.learning_rate},
          {"dropout_rate", c.dropout_rate},
          {"mcdo_passes", c.mcdo_passes},
          {"fusion_metrics", metrics},
          {"mcdo_metrics", c.mcdo_metrics},
          {"methods", methods}};
}

// Keys absent from `j` keep their current values.
inline void apply_json(pipeline_config& c, const nlohmann::json& j) {
  require(j.is_object(), "config: expected a JSON object");
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::remove_reference_t<decltype(field)>>();
  };
  try {
    get("seed", c.seed);
    get("train", c.data.train);
    get("val", c.data.val);
    get("test", c.data.test);
    get("fog_severity", c.data.fog_severity);
    get("height", c.data.scene.height);
    get("width", c.data.scene.width);
    get("min_objects", c.data.scene.min_objects);
    get("max_objects", c.data.scene.max_objects);
    get("expert_steps", c.expert_steps);
    get("tempnet_steps", c.tempnet_steps);
    get("tempnet_batch", c.tempnet_batch);
    get("learning_rate", c.learning_rate);
    get("dropout_rate", c.dropout_rate);
    get("mcdo_passes", c.mcdo_passes);
    get("mcdo_metrics", c.mcdo_metrics);
    if (j.contains("fusion_metrics")) {
      c.fusion_metrics.clear();
      for (const auto& m : j.at("fusion_metrics")) c.fusion_metrics.push_back(metric_from_string(m.get<std::string>()));
    }
    if (j.contains("methods")) {
      c.methods.clear();
      for (const auto& m : j.at("methods")) c.methods.push_back(fusion_method_from_string(m.get<std::string>()));
    }
  } catch (const nlohmann::json::exception& e) {
    throw validation_error(std::string("config: ") + e.what());
  }
  require(!c.fusion_metrics.empty(), "config: fusion_metrics must not be empty");
  for (auto m : c.fusion_metrics)
    require(!needs_mcdo(m) || c.mcdo_metrics, "config: MC-dropout fusion metrics need mcdo_metrics = true");
  require(c.mcdo_passes >= 2, "config: mcdo_passes must be >= 2");
}

// Seed streams, so each stage can be re-run independently.
namespace seeds {
inline std::uint64_t init(std::uint64_t s, modality m, bool temp) { return derive_seed(s, 0x1000 + 2 * static_cast<int>(m) + temp); }
inline std::uint64_t train(std::uint64_t s, modality m, bool temp) { return derive_seed(s, 0x2000 + 2 * static_cast<int>(m) + temp); }
inline std::uint64_t mcdo(std::uint64_t s, std::uint64_t image) { return derive_seed(s, 0x3000, image); }
inline std::uint64_t condition(std::uint64_t s, std::size_t cond, std::size_t scene) {
  return derive_seed(derive_seed(s, 0x4000), cond, scene);
}
}  // namespace seeds

// ---------------------------------------------------------------------------
// Models and calibration

struct ModelSet {
  Expert a, b, ab;
  TempNet temp_a, temp_b;

  const Expert& expert(modality m) const { return m == modality::a ? a : m == modality::b ? b : ab; }
  const TempNet& tempnet(modality m) const { return m == modality::a ? temp_a : temp_b; }
};

inline Expert train_expert_stage(const Dataset& d, modality m, const pipeline_config& cfg,
                                 expert_training* log = nullptr) {
  const auto train = samples(d.train, m);
  const auto val = samples(d.val, m);
  auto e = build_expert(m, scene_num_classes, cfg.dropout_rate, seeds::init(cfg.seed, m, false));
  auto res = train_expert(std::move(e), train, val,
                          {cfg.expert_steps, cfg.learning_rate, 250, seeds::train(cfg.seed, m, false)});
  if (cfg.expert_steps == 0) res.expert.trained = true;
  if (log) *log = res;
  return res.expert;
}

inline TempNet train_tempnet_stage(const Dataset& d, const Expert& expert, const pipeline_config& cfg,
                                   tempnet_training* log = nullptr) {
  const auto m = expert.mod;
  require(m != modality::ab, "train_tempnet_stage: TempNets are per single modality");
  const auto train = samples(d.train, m);
  const auto val = samples(d.val, m);
  temp_train_config tc;
  tc.steps = cfg.tempnet_steps;
  tc.batch = cfg.tempnet_batch;
  tc.learning_rate = cfg.learning_rate;
  tc.validate_every = 500;
  tc.seed = seeds::train(cfg.seed, m, true);
  auto res = train_tempnet(build_tempnet(m, seeds::init(cfg.seed, m, true)), expert, train, val, tc);
  if (log) *log = res;
  return res.tempnet;
}

using metric_scores = std::map<metric_kind, double>;

// Image-level scores of one single-modality expert on one input.
inline metric_scores image_scores(const Expert& e, const TempNet& tn, const Image& x, const LogitMap& logits,
                                  bool with_mcdo, int passes, std::uint64_t mcdo_seed) {
  metric_scores s;
  s[metric_kind::entropy] = image_score(entropy(softmax(logits)));
  s[metric_kind::ave_temp] = temp_uncertainty_score(temp_forward(tn, x));
  if (with_mcdo) {
    const auto set = mcdo_sample(e, x, passes, mcdo_seed);
    s[metric_kind::predictive_entropy] = image_score(predictive_entropy(set));
    s[metric_kind::mutual_information] = image_score(mutual_information(set));
  }
  return s;
}

struct Calibration {
  std::vector<DeviationStats> stats;
  std::map<std::string, double> t_cal;  // scalar temperature per expert id
  std::vector<metric_kind> fusion_metrics;

  const DeviationStats& find(const std::string& expert_id, metric_kind m) const {
    for (const auto& s : stats)
      if (s.expert_id == expert_id && s.metric == m) return s;
    throw validation_error("no deviation stats for " + expert_id + "/" + std::string(to_string(m)));
  }
};

inline std::vector<metric_kind> available_metrics(bool with_mcdo) {
  std::vector<metric_kind> out{metric_kind::ave_temp, metric_kind::entropy};
  if (with_mcdo) {
    out.push_back(metric_kind::predictive_entropy);
    out.push_back(metric_kind::mutual_information);
  }
  return out;
}

// Deviation statistics over the training images and scalar temperatures on
// the validation images, for the two single-modality experts.
inline Calibration calibrate(const Dataset& d, const ModelSet& models, const pipeline_config& cfg) {
  Calibration cal;
  cal.fusion_metrics = cfg.fusion_metrics;
  for (auto m : {modality::a, modality::b}) {
    const auto& e = models.expert(m);
    const auto& tn = models.tempnet(m);
    std::map<metric_kind, std::vector<double>> per_metric;
    for (std::size_t i = 0; i < d.train.size(); ++i) {
      const auto x = d.train[i].input(m);
      const auto logits = predict(e, x).logits;
      for (const auto& [k, v] : image_scores(e, tn, x, logits, cfg.mcdo_metrics, cfg.mcdo_passes,
                                             seeds::mcdo(cfg.seed, i)))
        per_metric[k].push_back(v);
    }
    for (const auto& [k, v] : per_metric) cal.stats.push_back(fit_stats(v, e.id, k));

    std::vector<LogitMap> logits;
    std::vector<LabelMap> labels;
    for (const auto& s : d.val) {
      logits.push_back(predict(e, s.input(m)).logits);
      labels.push_back(s.labels);
    }
    std::vector<logit_sample> set;
    for (std::size_t i = 0; i < logits.size(); ++i) set.push_back({&logits[i], &labels[i]});
    cal.t_cal[e.id] = fit_scalar_temperature(set);
  }
  return cal;
}

inline nlohmann::json to_json(const Calibration& c) {
  nlohmann::json stats = nlohmann::json::array(), metrics = nlohmann::json::array();
  for (const auto& s : c.stats) stats.push_back(to_json(s));
  for (auto m : c.fusion_metrics) metrics.push_back(to_string(m));
  return {{"stats", stats}, {"t_cal", c.t_cal}, {"fusion_metrics", metrics}};
}

inline Calibration calibration_from_json(const nlohmann::json& j) {
  Calibration c;
  try {
    for (const auto& s : j.at("stats")) c.stats.push_back(stats_from_json(s));
    c.t_cal = j.at("t_cal").get<std::map<std::string, double>>();
    for (const auto& m : j.at("fusion_metrics")) c.fusion_metrics.push_back(metric_from_string(m.get<std::string>()));
  } catch (const nlohmann::json::exception& e) {
    throw validation_error(std::string("calibration file: ") + e.what());
  }
  return c;
}

// ---------------------------------------------------------------------------
// Result tables

struct DeviationCell {
  std::string condition;
  std::string expert;
  std::string metric;
  double mean_delta = 1.0;

  friend bool operator==(const DeviationCell&, const DeviationCell&) = default;
};

struct ResultTable {
  std::vector<std::string> methods;
  std::vector<std::string> conditions;
  std::vector<bool> in_distribution;  // per condition
  std::vector<std::vector<double>> miou;  // [method][condition]
  std::vector<DeviationCell> deviation;

  double cell(const std::string& method, const std::string& condition) const {
    const auto mi = std::find(methods.begin(), methods.end(), method);
    const auto ci = std::find(conditions.begin(), conditions.end(), condition);
    require(mi != methods.end() && ci != conditions.end(), "ResultTable: no cell " + method + "/" + condition);
    return miou[mi - methods.begin()][ci - conditions.begin()];
  }

  double delta(const std::string& condition, const std::string& expert, metric_kind m) const {
    for (const auto& d : deviation)
      if (d.condition == condition && d.expert == expert && d.metric == to_string(m)) return d.mean_delta;
    throw validation_error("ResultTable: no deviation cell " + condition + "/" + expert);
  }

  // Mean mIoU of `method` over in-distribution or unseen conditions.
  double average(const std::string& method, bool in_dist) const {
    double sum = 0.0;
    int n = 0;
    for (std::size_t c = 0; c < conditions.size(); ++c)
      if (in_distribution[c] == in_dist) {
        sum += cell(method, conditions[c]);
        ++n;
      }
    require(n > 0, "ResultTable: no conditions in group");
    return sum / n;
  }

  friend bool operator==(const ResultTable&, const ResultTable&) = default;
};

inline nlohmann::json to_json(const ResultTable& t) {
  nlohmann::json j;
  j["methods"] = t.methods;
  j["conditions"] = t.conditions;
  j["in_distribution"] = t.in_distribution;
  j["miou"] = t.miou;
  auto& dev = j["deviation"] = nlohmann::json::array();
  for (const auto& d : t.deviation)
    dev.push_back({{"condition", d.condition}, {"expert", d.expert}, {"metric", d.metric}, {"mean_delta", d.mean_delta}});
  return j;
}

inline ResultTable result_table_from_json(const nlohmann::json& j) {
  ResultTable t;
  try {
    t.methods = j.at("methods").get<std::vector<std::string>>();
    t.conditions = j.at("conditions").get<std::vector<std::string>>();
    t.in_distribution = j.at("in_distribution").get<std::vector<bool>>();
    t.miou = j.at("miou").get<std::vector<std::vector<double>>>();
    for (const auto& d : j.at("deviation"))
      t.deviation.push_back({d.at("condition").get<std::string>(), d.at("expert").get<std::string>(),
                             d.at("metric").get<std::string>(), d.at("mean_delta").get<double>()});
  } catch (const nlohmann::json::exception& e) {
    throw validation_error(std::string("results file: ") + e.what());
  }
  require(t.miou.size() == t.methods.size() && t.in_distribution.size() == t.conditions.size(),
          "results file: inconsistent table shape");
  for (const auto& row : t.miou) require(row.size() == t.conditions.size(), "results file: ragged table");
  return t;
}

// ---------------------------------------------------------------------------
// Evaluation

struct scene_evaluation {
  std::map<fusion_method, LabelMap> predictions;
  std::map<fusion_method, ProbMap> fused;
  std::map<std::pair<std::string, metric_kind>, double> deltas;  // (expert id, metric) -> delta
  DeviationRatio delta_min_a, delta_min_b;
};

// Fuses one (already corrupted) scene with every requested method.
inline scene_evaluation evaluate_scene(const Scene& s, const ModelSet& models, const Calibration& cal,
                                       const pipeline_config& cfg, std::uint64_t mcdo_seed,
                                       bool keep_fused = false) {
  scene_evaluation out;
  std::vector<ExpertLogits> singles;
  std::vector<DeviationRatio> mins;
  std::vector<double> t_cal;
  for (auto m : {modality::a, modality::b}) {
    const auto& e = models.expert(m);
    const auto x = s.input(m);
    auto logits = predict(e, x).logits;
    const auto scores = image_scores(e, models.tempnet(m), x, logits, cfg.mcdo_metrics, cfg.mcdo_passes,
                                     derive_seed(mcdo_seed, static_cast<std::uint64_t>(m)));
    std::vector<DeviationRatio> fused_metric_deltas;
    for (const auto& [k, v] : scores) {
      const auto d = deviation_ratio(v, cal.find(e.id, k));
      out.deltas[{e.id, k}] = d.value();
      if (std::find(cal.fusion_metrics.begin(), cal.fusion_metrics.end(), k) != cal.fusion_metrics.end())
        fused_metric_deltas.push_back(d);
    }
    require(!fused_metric_deltas.empty(), "evaluate_scene: no fusion metric available for " + e.id);
    mins.push_back(combine_min(fused_metric_deltas));
    const auto it = cal.t_cal.find(e.id);
    t_cal.push_back(it == cal.t_cal.end() ? 1.0 : it->second);
    singles.push_back({e.id, std::move(logits)});
  }
  out.delta_min_a = mins[0];
  out.delta_min_b = mins[1];

  std::optional<ExpertLogits> leak;
  for (auto method : cfg.methods) {
    ProbMap fused;
    if (method == fusion_method::uno || method == fusion_method::uno_pp) {
      if (method == fusion_method::uno_pp && !leak)
        leak = ExpertLogits{models.ab.id, predict(models.ab, s.input(modality::ab)).logits};
      fused = fuse_uno(singles, mins, method, leak ? &*leak : nullptr, multimodal_min(mins));
    } else {
      fused = fuse_baseline(singles, method, t_cal);
    }
    out.predictions.emplace(method, argmax_labels(fused));
    if (keep_fused) out.fused.emplace(method, std::move(fused));
  }
  return out;
}

inline ResultTable run_experiment(std::span<const Scene> test, const ModelSet& models, const Calibration& cal,
                                  const pipeline_config& cfg) {
  require(!test.empty(), "run_experiment: empty test split");
  const auto conditions = test_conditions(cfg.data.fog_severity);
  const auto metrics = available_metrics(cfg.mcdo_metrics);

  ResultTable table;
  for (auto m : cfg.methods) table.methods.emplace_back(to_string(m));
  table.miou.assign(cfg.methods.size(), std::vector<double>(conditions.size(), 0.0));

  for (std::size_t ci = 0; ci < conditions.size(); ++ci) {
    const auto& cond = conditions[ci];
    table.conditions.push_back(cond.name);
    table.in_distribution.push_back(cond.in_distribution);
    std::vector<ConfusionMatrix> cms(cfg.methods.size(), ConfusionMatrix(scene_num_classes));
    std::map<std::pair<std::string, metric_kind>, double> delta_sum;
    for (std::size_t si = 0; si < test.size(); ++si) {
      const auto seed = seeds::condition(cfg.seed, ci, si);
      const auto scene = apply_condition(test[si], cond, seed, cfg.data.scene);
      const auto ev = evaluate_scene(scene, models, cal, cfg, seeds::mcdo(seed, si));
      for (std::size_t mi = 0; mi < cfg.methods.size(); ++mi)
        accumulate_confusion(ev.predictions.at(cfg.methods[mi]), scene.labels, cms[mi]);
      for (const auto& [key, v] : ev.deltas) delta_sum[key] += v;
    }
    for (std::size_t mi = 0; mi < cfg.methods.size(); ++mi) table.miou[mi][ci] = mean_iou(cms[mi]);
    for (const auto& id : {models.a.id, models.b.id})
      for (auto k : metrics)
        table.deviation.push_back({cond.name, id, std::string(to_string(k)),
                                   delta_sum.at({id, k}) / static_cast<double>(test.size())});
  }
  return table;
}

// Mean temperature in the fogged and clean halves when the left half of each
// (clean) scene is re-rendered in fog of the given level.
struct half_fog_response {
  double degraded_mean = 0.0;
  double clean_mean = 0.0;
};

inline half_fog_response half_image_fog_temperature(const TempNet& tn, std::span<const Scene> scenes,
                                                    double severity, const scene_config& scene_cfg = {}) {
  require(tn.mod == modality::a, "half_image_fog_temperature: fog degrades the appearance modality");
  double degraded = 0.0, clean = 0.0;
  std::size_t nd = 0, nc = 0;
  for (std::size_t si = 0; si < scenes.size(); ++si) {
    const auto& s = scenes[si];
    scene_config sc = scene_cfg;
    sc.fog = severity;
    const auto fogged = generate_scene(s.seed, sc).a;
    const int h = s.a.height(), w = s.a.width(), ch = s.a.channels();
    std::vector<float> mixed(s.a.values().begin(), s.a.values().end());
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w / 2; ++x)
        for (int k = 0; k < ch; ++k) {
          const std::size_t i = (static_cast<std::size_t>(y) * w + x) * ch + k;
          mixed[i] = fogged.values()[i];
        }
    const auto t = temp_forward(tn, Image(h, w, ch, std::move(mixed)));
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        if (x < w / 2) {
          degraded += t.at(y, x);
          ++nd;
        } else {
          clean += t.at(y, x);
          ++nc;
        }
      }
  }
  require(nd > 0 && nc > 0, "half_image_fog_temperature: empty halves");
  return {degraded / static_cast<double>(nd), clean / static_cast<double>(nc)};
}

// ---------------------------------------------------------------------------
// Reports

inline std::string format_fixed(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

// One row per method, one column per condition.
inline std::string miou_csv(const ResultTable& t) {
  std::string out = "method";
  for (const auto& c : t.conditions) out += "," + c;
  out += "\n";
  for (std::size_t m = 0; m < t.methods.size(); ++m) {
    out += t.methods[m];
    for (double v : t.miou[m]) out += "," + format_fixed(v);
    out += "\n";
  }
  return out;
}

inline std::string deviation_csv(const ResultTable& t) {
  std::string out = "condition,expert,metric,mean_delta\n";
  for (const auto& d : t.deviation)
    out += d.condition + "," + d.expert + "," + d.metric + "," + format_fixed(d.mean_delta) + "\n";
  return out;
}

inline std::string summary_markdown(const ResultTable& t) {
  std::string out = "| method | in-distribution | unseen degradation |\n|---|---|---|\n";
  for (const auto& m : t.methods)
    out += "| " + m + " | " + format_fixed(100.0 * t.average(m, true), 2) + " | " +
           format_fixed(100.0 * t.average(m, false), 2) + " |\n";
  return out;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), "cannot write " + path.string());
  out << text;
  require(static_cast<bool>(out), "write failed: " + path.string());
}

// Writes miou.csv, deviation.csv, summary.md and results.json under `dir`.
inline void emit_report(const ResultTable& t, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  require(!ec, "cannot create " + dir.string() + ": " + ec.message());
  write_text(dir / "miou.csv", miou_csv(t));
  write_text(dir / "deviation.csv", deviation_csv(t));
  write_text(dir / "summary.md", summary_markdown(t));
  write_text(dir / "results.json", to_json(t).dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Whole pipeline in memory

struct PipelineResult {
  ModelSet models;
  Calibration calibration;
  ResultTable table;
  std::vector<loss_point> expert_curve_a;
  tempnet_training tempnet_log_a;
};

inline ModelSet train_models(const Dataset& d, const pipeline_config& cfg, PipelineResult* log = nullptr) {
  ModelSet models;
  expert_training ea;
  models.a = train_expert_stage(d, modality::a, cfg, &ea);
  models.b = train_expert_stage(d, modality::b, cfg);
  models.ab = train_expert_stage(d, modality::ab, cfg);
  tempnet_training ta;
  models.temp_a = train_tempnet_stage(d, models.a, cfg, &ta);
  models.temp_b = train_tempnet_stage(d, models.b, cfg);
  if (log) {
    log->expert_curve_a = ea.curve;
    log->tempnet_log_a = ta;
  }
  return models;
}

inline PipelineResult run_pipeline(const pipeline_config& cfg, const Dataset* prebuilt = nullptr) {
  Dataset owned;
  if (!prebuilt) {
    auto dcfg = cfg.data;
    dcfg.seed = cfg.seed;
    owned = build_dataset(dcfg);
  }
  const Dataset& d = prebuilt ? *prebuilt : owned;
  PipelineResult r;
  r.models = train_models(d, cfg, &r);
  r.calibration = calibrate(d, r.models, cfg);
  r.table = run_experiment(d.test, r.models, r.calibration, cfg);
  return r;
}

}  // namespace uno
