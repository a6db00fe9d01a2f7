// Command-line driver. Every verb works on one workspace directory (--out):
//
//   config.json          resolved configuration (written by gen-data)
//   data/<split>/...     scenes
//   models/*.ckpt        experts and TempNets, plus loss curves
//   calibration.json     deviation statistics and scalar temperatures
//   results.json         evaluation table
//   report/              CSV / markdown tables
//   fused/               single-scene fusion dumps
//
// Exit codes: 0 ok, 2 validation error, 3 numerical failure.

#include <uno/uno.hpp>

#include <CLI11.hpp>

#include <iostream>

using namespace uno;
namespace fs = std::filesystem;

namespace {

struct global_options {
  std::string out = "uno_out";
  std::string config;
  std::optional<std::uint64_t> seed;
};

nlohmann::json read_json(const fs::path& p) {
  std::ifstream in(p);
  require(static_cast<bool>(in), "cannot read " + p.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw validation_error(p.string() + ": " + e.what());
  }
}

// defaults <- workspace config.json <- --config <- --seed
pipeline_config resolve_config(const global_options& g) {
  pipeline_config cfg;
  const fs::path saved = fs::path(g.out) / "config.json";
  if (fs::exists(saved)) apply_json(cfg, read_json(saved));
  if (!g.config.empty()) apply_json(cfg, read_json(g.config));
  if (g.seed) cfg.seed = *g.seed;
  cfg.data.seed = cfg.seed;
  return cfg;
}

fs::path models_dir(const global_options& g) { return fs::path(g.out) / "models"; }
fs::path expert_path(const global_options& g, modality m) {
  return models_dir(g) / ("expert_" + std::string(to_string(m)) + ".ckpt");
}
fs::path tempnet_path(const global_options& g, modality m) {
  return models_dir(g) / ("tempnet_" + std::string(to_string(m)) + ".ckpt");
}

Dataset load_workspace_data(const global_options& g) {
  const auto dir = fs::path(g.out) / "data";
  require(fs::is_directory(dir), "no dataset in " + dir.string() + " (run gen-data first)");
  return load_dataset(dir);
}

ModelSet load_models(const global_options& g) {
  for (const auto& p : {expert_path(g, modality::a), expert_path(g, modality::b), expert_path(g, modality::ab),
                        tempnet_path(g, modality::a), tempnet_path(g, modality::b)})
    require(fs::exists(p), "missing checkpoint " + p.string() + " (run train / train-temp first)");
  ModelSet m;
  m.a = load_expert(expert_path(g, modality::a).string());
  m.b = load_expert(expert_path(g, modality::b).string());
  m.ab = load_expert(expert_path(g, modality::ab).string());
  m.temp_a = load_tempnet(tempnet_path(g, modality::a).string());
  m.temp_b = load_tempnet(tempnet_path(g, modality::b).string());
  return m;
}

Calibration load_calibration(const global_options& g) {
  const auto p = fs::path(g.out) / "calibration.json";
  require(fs::exists(p), "missing " + p.string() + " (run calibrate first)");
  return calibration_from_json(read_json(p));
}

std::vector<modality> parse_modalities(const std::string& s, bool allow_ab) {
  if (s == "all") {
    if (allow_ab) return {modality::a, modality::b, modality::ab};
    return {modality::a, modality::b};
  }
  const auto m = modality_from_string(s);
  require(allow_ab || m != modality::ab, "TempNets exist only for modalities a and b");
  return {m};
}

void write_curve(const fs::path& p, const std::vector<loss_point>& curve) {
  std::string csv = "step,train_loss,val_loss\n";
  for (const auto& c : curve)
    csv += std::to_string(c.step) + "," + format_fixed(c.train_loss) + "," + format_fixed(c.val_loss) + "\n";
  write_text(p, csv);
}

// ---------------------------------------------------------------------------
// verbs

void cmd_gen_data(const global_options& g) {
  const auto cfg = resolve_config(g);
  fs::create_directories(g.out);
  const auto dir = fs::path(g.out) / "data";
  fs::remove_all(dir);
  const auto d = build_dataset(cfg.data);
  save_dataset(dir, d);
  write_text(fs::path(g.out) / "config.json", to_json(cfg).dump(2) + "\n");
  std::cout << "wrote " << d.train.size() << " train, " << d.val.size() << " val, " << d.test.size()
            << " test scenes to " << dir.string() << "\n";
}

void cmd_train(const global_options& g, const std::string& which) {
  const auto cfg = resolve_config(g);
  const auto d = load_workspace_data(g);
  fs::create_directories(models_dir(g));
  for (auto m : parse_modalities(which, true)) {
    expert_training log;
    const auto e = train_expert_stage(d, m, cfg, &log);
    save_expert(expert_path(g, m).string(), e);
    write_curve(models_dir(g) / ("expert_" + std::string(to_string(m)) + "_curve.csv"), log.curve);
    std::cout << e.id << ": best val loss " << format_fixed(log.best_val_loss, 4) << " at step " << log.best_step
              << ", val pixel accuracy " << format_fixed(pixel_accuracy(e, samples(d.val, m)), 4) << "\n";
  }
}

void cmd_train_temp(const global_options& g, const std::string& which) {
  const auto cfg = resolve_config(g);
  const auto d = load_workspace_data(g);
  for (auto m : parse_modalities(which, false)) {
    const auto p = expert_path(g, m);
    require(fs::exists(p), "missing checkpoint " + p.string() + " (run train first)");
    const auto e = load_expert(p.string());
    tempnet_training log;
    const auto tn = train_tempnet_stage(d, e, cfg, &log);
    save_tempnet(tempnet_path(g, m).string(), tn);
    write_curve(models_dir(g) / ("tempnet_" + std::string(to_string(m)) + "_curve.csv"), log.curve);
    std::cout << "tempnet_" << to_string(m) << ": val NLL " << format_fixed(log.val_nll, 4) << " (t = 1: "
              << format_fixed(log.identity_val_nll, 4) << ")"
              << (log.fell_back_to_identity ? ", no improvement, kept t = 1" : "") << "\n";
  }
}

void cmd_calibrate(const global_options& g) {
  const auto cfg = resolve_config(g);
  const auto d = load_workspace_data(g);
  const auto cal = calibrate(d, load_models(g), cfg);
  write_text(fs::path(g.out) / "calibration.json", to_json(cal).dump(2) + "\n");
  for (const auto& s : cal.stats)
    std::cout << s.expert_id << " " << to_string(s.metric) << ": mu " << format_fixed(s.mu_train, 4) << ", sigma "
              << format_fixed(s.sigma_train, 4) << "\n";
  for (const auto& [id, t] : cal.t_cal) std::cout << id << " T_cal " << format_fixed(t, 4) << "\n";
}

void cmd_fuse(const global_options& g, const std::string& condition, int index, const std::string& methods) {
  auto cfg = resolve_config(g);
  const auto test = load_split(fs::path(g.out) / "data", "test");
  require(index >= 0 && index < static_cast<int>(test.size()), "fuse: scene index out of range");
  const auto conds = test_conditions(cfg.data.fog_severity);
  const auto it = std::find_if(conds.begin(), conds.end(), [&](const auto& c) { return c.name == condition; });
  if (it == conds.end()) {
    std::string names;
    for (const auto& c : conds) names += " " + c.name;
    throw validation_error("unknown condition " + condition + "; expected one of:" + names);
  }
  if (methods != "all") cfg.methods = {fusion_method_from_string(methods)};
  const auto ci = static_cast<std::size_t>(it - conds.begin());
  const auto seed = seeds::condition(cfg.seed, ci, static_cast<std::size_t>(index));
  const auto scene = apply_condition(test[static_cast<std::size_t>(index)], *it, seed, cfg.data.scene);
  const auto models = load_models(g);
  const auto ev = evaluate_scene(scene, models, load_calibration(g), cfg, seeds::mcdo(seed, static_cast<std::size_t>(index)), true);

  const auto dir = fs::path(g.out) / "fused";
  fs::create_directories(dir);
  const std::string stem = condition + "_" + scene_dir_name(index);
  save_tensor((dir / (stem + "_a.unof")).string(), scene.a);
  save_label_ppm((dir / (stem + "_gt.ppm")).string(), scene.labels);
  save_pgm((dir / (stem + "_temp_a.pgm")).string(), temp_forward(models.temp_a, scene.a), 0.0, 2.0);
  std::cout << "delta_min expert_a " << format_fixed(ev.delta_min_a.value(), 4) << ", expert_b "
            << format_fixed(ev.delta_min_b.value(), 4) << "\n";
  for (const auto& [method, pred] : ev.predictions) {
    const std::string name(to_string(method));
    save_labels((dir / (stem + "_" + name + ".unol")).string(), pred);
    save_label_ppm((dir / (stem + "_" + name + ".ppm")).string(), pred);
    ConfusionMatrix cm(scene_num_classes);
    accumulate_confusion(pred, scene.labels, cm);
    std::cout << name << ": scene mIoU " << format_fixed(mean_iou(cm), 4) << "\n";
  }
}

void cmd_evaluate(const global_options& g) {
  const auto cfg = resolve_config(g);
  const auto test = load_split(fs::path(g.out) / "data", "test");
  const auto table = run_experiment(test, load_models(g), load_calibration(g), cfg);
  write_text(fs::path(g.out) / "results.json", to_json(table).dump(2) + "\n");
  std::cout << summary_markdown(table);
}

void cmd_report(const global_options& g) {
  const auto p = fs::path(g.out) / "results.json";
  require(fs::exists(p), "missing " + p.string() + " (run evaluate first)");
  const auto table = result_table_from_json(read_json(p));
  const auto dir = fs::path(g.out) / "report";
  emit_report(table, dir);
  std::cout << summary_markdown(table) << "report written to " << dir.string() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"uncertainty-aware multimodal fusion benchmark"};
  app.require_subcommand(1);
  global_options g;
  std::uint64_t seed = 0;
  app.add_option("--out", g.out, "workspace directory")->capture_default_str();
  app.add_option("--config", g.config, "JSON configuration overrides");
  auto* seed_opt = app.add_option("--seed", seed, "master seed (overrides the configuration)");

  std::string train_mod = "all", temp_mod = "all", condition = "fog0", methods = "all";
  int index = 0;
  auto* gen = app.add_subcommand("gen-data", "generate the synthetic dataset");
  auto* train = app.add_subcommand("train", "train the segmentation experts");
  train->add_option("--modality", train_mod, "a, b, ab or all")->capture_default_str();
  auto* train_temp = app.add_subcommand("train-temp", "train TempNets on the frozen experts");
  train_temp->add_option("--modality", temp_mod, "a, b or all")->capture_default_str();
  auto* cal = app.add_subcommand("calibrate", "fit deviation statistics and scalar temperatures");
  auto* fuse = app.add_subcommand("fuse", "fuse one test scene and dump the predictions");
  fuse->add_option("--condition", condition, "test condition name")->capture_default_str();
  fuse->add_option("--index", index, "test scene index")->capture_default_str();
  fuse->add_option("--method", methods, "fusion method or all")->capture_default_str();
  auto* eval = app.add_subcommand("evaluate", "score every method under every test condition");
  auto* report = app.add_subcommand("report", "write CSV / markdown tables from results.json");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  if (seed_opt->count()) g.seed = seed;

  try {
    if (gen->parsed()) cmd_gen_data(g);
    else if (train->parsed()) cmd_train(g, train_mod);
    else if (train_temp->parsed()) cmd_train_temp(g, temp_mod);
    else if (cal->parsed()) cmd_calibrate(g);
    else if (fuse->parsed()) cmd_fuse(g, condition, index, methods);
    else if (eval->parsed()) cmd_evaluate(g);
    else if (report->parsed()) cmd_report(g);
    return 0;
  } catch (const validation_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const numerical_error& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 3;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
