#pragma once

// Procedural two-modality segmentation scenes and a parameterized
// degradation suite.
//
// Modality A ("appearance", RGB) and modality B ("range", 1 channel) are
// complementary by construction: classes 1/2 share a depth band and differ
// only in color, classes 3/4 share a color and differ only in depth.
//
// Weather fog is part of rendering: it is blended into the noise-free
// radiance before sensor noise is added, so distant regions lose contrast
// against the noise floor (a post-hoc fog corruption also exists).

#include <uno/experts.hpp>

#include <filesystem>
#include <optional>

namespace uno {

inline constexpr int scene_num_classes = 6;

enum class shape_kind { rectangle, disc, triangle };

inline std::string_view to_string(shape_kind s) {
  switch (s) {
    case shape_kind::rectangle: return "rectangle";
    case shape_kind::disc: return "disc";
    case shape_kind::triangle: return "triangle";
  }
  return "?";
}

struct scene_object {
  int label = 0;
  shape_kind shape = shape_kind::rectangle;
  double cx = 0, cy = 0;  // center, pixels
  double size = 0;        // half extent / radius, pixels
  double depth = 0;
  std::array<double, 3> color{};
};

struct scene_config {
  int height = 64;
  int width = 64;
  int min_objects = 3;
  int max_objects = 8;
  double fog = 0.0;  // rendered weather fog level in [0, 1]
};

enum class corruption_kind {
  gaussian_noise, shot_noise, impulse_noise, motion_blur, fog, brightness, blackout, streaks
};

inline std::string_view to_string(corruption_kind k) {
  switch (k) {
    case corruption_kind::gaussian_noise: return "gaussian_noise";
    case corruption_kind::shot_noise: return "shot_noise";
    case corruption_kind::impulse_noise: return "impulse_noise";
    case corruption_kind::motion_blur: return "motion_blur";
    case corruption_kind::fog: return "fog";
    case corruption_kind::brightness: return "brightness";
    case corruption_kind::blackout: return "blackout";
    case corruption_kind::streaks: return "streaks";
  }
  return "?";
}

inline corruption_kind corruption_kind_from_string(std::string_view s) {
  for (auto k : {corruption_kind::gaussian_noise, corruption_kind::shot_noise,
                 corruption_kind::impulse_noise, corruption_kind::motion_blur, corruption_kind::fog,
                 corruption_kind::brightness, corruption_kind::blackout, corruption_kind::streaks})
    if (to_string(k) == s) return k;
  throw validation_error("unknown corruption: " + std::string(s));
}

struct Corruption {
  corruption_kind kind = corruption_kind::gaussian_noise;
  double severity = 0.0;  // [0, 1], 0 is the identity
  modality target = modality::a;
  std::uint64_t seed = 0;
};

struct Scene {
  Image a;  // appearance, 3 channels
  Image b;  // range, 1 channel; larger is farther
  LabelMap labels;
  std::uint64_t seed = 0;
  double fog = 0.0;  // weather level the scene was rendered with
  std::vector<scene_object> objects;
  std::optional<Corruption> corruption;  // already applied to the stored images

  Image input(modality m) const {
    switch (m) {
      case modality::a: return a;
      case modality::b: return b;
      case modality::ab: return concat_channels(a, b);
    }
    return a;
  }
  labeled_image sample(modality m) const { return {input(m), labels}; }
};

namespace scene_detail {

struct class_look {
  std::array<double, 3> color;
  double depth_lo, depth_hi;
};

// Index = label. 1/2: same (far) depth band; 3/4: same color.
inline constexpr std::array<class_look, scene_num_classes> looks{{
    {{0.45, 0.50, 0.40}, 0.84, 1.00},  // background (ground plane, see below)
    {{0.75, 0.30, 0.25}, 0.66, 0.76},
    {{0.25, 0.35, 0.75}, 0.66, 0.76},
    {{0.80, 0.72, 0.25}, 0.08, 0.18},
    {{0.80, 0.72, 0.25}, 0.42, 0.52},
    {{0.20, 0.65, 0.60}, 0.25, 0.33},
}};

// Object labels are drawn from this bag; the 3/4 pair is drawn twice as often.
inline constexpr std::array<int, 7> label_bag{1, 2, 3, 3, 4, 4, 5};

inline constexpr double color_jitter = 0.05;
inline constexpr double appearance_noise = 0.06;
inline constexpr double range_noise = 0.01;

inline bool inside(const scene_object& o, const std::array<double, 6>& tri, double x, double y) {
  switch (o.shape) {
    case shape_kind::rectangle:
      return std::abs(x - o.cx) <= o.size && std::abs(y - o.cy) <= o.size * 0.7;
    case shape_kind::disc:
      return (x - o.cx) * (x - o.cx) + (y - o.cy) * (y - o.cy) <= o.size * o.size;
    case shape_kind::triangle: {
      auto cross = [&](int i, int j) {
        return (tri[2 * j] - tri[2 * i]) * (y - tri[2 * i + 1]) -
               (tri[2 * j + 1] - tri[2 * i + 1]) * (x - tri[2 * i]);
      };
      const double d1 = cross(0, 1), d2 = cross(1, 2), d3 = cross(2, 0);
      const bool neg = d1 < 0 || d2 < 0 || d3 < 0;
      const bool pos = d1 > 0 || d2 > 0 || d3 > 0;
      return !(neg && pos);
    }
  }
  return false;
}

inline float clamp01(double v) { return static_cast<float>(std::clamp(v, 0.0, 1.0)); }

}  // namespace scene_detail

// ---------------------------------------------------------------------------
// Corruptions

inline constexpr double fog_gray = 0.6;

inline int motion_blur_length(double severity) {
  return static_cast<int>(std::ceil(1.0 + 8.0 * severity - 1e-12));
}

inline Image apply_corruption(const Image& img, const Corruption& c,
                              const Image* depth_hint = nullptr) {
  require(c.severity >= 0.0 && c.severity <= 1.0, "apply_corruption: severity must be in [0,1]");
  if (c.kind == corruption_kind::fog) {
    require(depth_hint != nullptr, "apply_corruption: fog requires a depth hint");
    require(same_spatial_shape(*depth_hint, img) && depth_hint->channels() == 1,
            "apply_corruption: depth hint shape mismatch");
  }
  if (c.severity == 0.0) return img;

  const int h = img.height(), w = img.width(), ch = img.channels();
  const double sev = c.severity;
  auto src = img.values();
  std::vector<double> out(src.begin(), src.end());
  rng gen(derive_seed(c.seed, static_cast<std::uint64_t>(c.kind)));
  const std::size_t npix = img.pixel_count();

  switch (c.kind) {
    case corruption_kind::gaussian_noise:
      for (double& v : out) v += 0.3 * sev * gen.normal();
      break;
    case corruption_kind::shot_noise: {
      const double lambda = 60.0 / (1.0 + 7.0 * sev);
      for (double& v : out) v = gen.poisson(std::max(v, 0.0) * lambda) / lambda;
      break;
    }
    case corruption_kind::impulse_noise:
      for (std::size_t i = 0; i < npix; ++i) {
        if (gen.uniform() >= sev / 2.0) continue;
        const double salt = gen.uniform() < 0.5 ? 0.0 : 1.0;
        for (int k = 0; k < ch; ++k) out[i * ch + k] = salt;
      }
      break;
    case corruption_kind::motion_blur: {
      const int len = motion_blur_length(sev);
      const int left = (len - 1) / 2;
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          for (int k = 0; k < ch; ++k) {
            double acc = 0.0;
            for (int t = 0; t < len; ++t) {
              const int xs = std::clamp(x - left + t, 0, w - 1);
              acc += src[(static_cast<std::size_t>(y) * w + xs) * ch + k];
            }
            out[(static_cast<std::size_t>(y) * w + x) * ch + k] = acc / len;
          }
      break;
    }
    case corruption_kind::fog:
      for (std::size_t i = 0; i < npix; ++i) {
        const double weight = std::min(1.0, sev * std::max(0.0, static_cast<double>(depth_hint->values()[i])));
        for (int k = 0; k < ch; ++k) out[i * ch + k] = (1.0 - weight) * out[i * ch + k] + weight * fog_gray;
      }
      break;
    case corruption_kind::brightness:
      for (double& v : out) v += 0.5 * sev;
      break;
    case corruption_kind::blackout:
      std::fill(out.begin(), out.end(), 0.0);
      break;
    case corruption_kind::streaks: {
      const double target = 0.2 * sev;
      std::vector<char> hit(npix, 0);
      std::size_t covered = 0;
      const double scale = std::min(h, w);
      for (int guard = 0; static_cast<double>(covered) < target * static_cast<double>(npix) && guard < 100000; ++guard) {
        const double x0 = gen.uniform(0.0, w), y0 = gen.uniform(0.0, h);
        const double ang = gen.uniform(-0.6, 0.6) + M_PI / 2.0 * (gen.uniform() < 0.3 ? 1.0 : 0.0);
        const double len = gen.uniform(0.12, 0.4) * scale;
        for (double t = 0.0; t <= len && static_cast<double>(covered) < target * static_cast<double>(npix); t += 0.5) {
          const int x = static_cast<int>(x0 + t * std::cos(ang));
          const int y = static_cast<int>(y0 + t * std::sin(ang));
          if (x < 0 || y < 0 || x >= w || y >= h) break;
          const std::size_t i = static_cast<std::size_t>(y) * w + x;
          if (!hit[i]) {
            hit[i] = 1;
            ++covered;
          }
        }
      }
      for (std::size_t i = 0; i < npix; ++i)
        if (hit[i])
          for (int k = 0; k < ch; ++k) out[i * ch + k] = 1.0;
      break;
    }
  }
  std::vector<float> result(out.size());
  std::transform(out.begin(), out.end(), result.begin(), [](double v) { return scene_detail::clamp01(v); });
  return Image(h, w, ch, std::move(result));
}

inline Scene generate_scene(std::uint64_t seed, const scene_config& cfg = {}) {
  require(cfg.height >= 4 && cfg.width >= 4, "generate_scene: image too small");
  require(cfg.min_objects >= 1 && cfg.max_objects >= cfg.min_objects, "generate_scene: bad object range");
  require(cfg.fog >= 0.0 && cfg.fog <= 1.0, "generate_scene: fog must be in [0,1]");
  using namespace scene_detail;
  rng gen(seed);
  const int h = cfg.height, w = cfg.width;
  const double scale = std::min(h, w);

  Scene s;
  s.seed = seed;
  s.fog = cfg.fog;
  const int count = gen.uniform_int(cfg.min_objects, cfg.max_objects);
  std::vector<std::array<double, 6>> triangles;
  for (int k = 0; k < count; ++k) {
    scene_object o;
    o.label = label_bag[static_cast<std::size_t>(gen.uniform_int(0, static_cast<int>(label_bag.size()) - 1))];
    o.shape = static_cast<shape_kind>(gen.uniform_int(0, 2));
    o.size = gen.uniform(0.12, 0.26) * scale;
    o.cx = gen.uniform(0.0, w - 1.0);
    o.cy = gen.uniform(0.0, h - 1.0);
    const auto& look = looks[o.label];
    o.depth = gen.uniform(look.depth_lo, look.depth_hi);
    for (int c = 0; c < 3; ++c) o.color[c] = look.color[c] + gen.uniform(-color_jitter, color_jitter);
    std::array<double, 6> tri{};
    for (int v = 0; v < 3; ++v) {
      const double ang = 2.0 * M_PI * (v / 3.0) + gen.uniform(-0.5, 0.5);
      const double r = o.size * gen.uniform(1.0, 1.4);
      tri[2 * v] = o.cx + r * std::cos(ang);
      tri[2 * v + 1] = o.cy + r * std::sin(ang);
    }
    triangles.push_back(tri);
    s.objects.push_back(o);
  }

  const std::size_t n = static_cast<std::size_t>(h) * w;
  std::vector<std::uint8_t> labels(n, 0);
  std::vector<int> owner(n, -1);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int k = 0; k < count; ++k)  // later objects paint over earlier ones
        if (inside(s.objects[k], triangles[k], x, y)) owner[static_cast<std::size_t>(y) * w + x] = k;

  std::vector<double> radiance(n * 3), range(n);
  const double bg_phase = gen.uniform(0.0, 2.0 * M_PI);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      const int k = owner[i];
      std::array<double, 3> color;
      double depth;
      if (k < 0) {
        // textured ground plane receding toward the top of the image
        const double tex = 0.05 * std::sin(0.35 * x + bg_phase) * std::cos(0.3 * y);
        for (int c = 0; c < 3; ++c) color[c] = looks[0].color[c] + tex;
        depth = looks[0].depth_hi - (looks[0].depth_hi - looks[0].depth_lo) * y / std::max(1, h - 1);
      } else {
        labels[i] = static_cast<std::uint8_t>(s.objects[k].label);
        color = s.objects[k].color;
        depth = s.objects[k].depth;
      }
      for (int c = 0; c < 3; ++c) radiance[i * 3 + c] = color[c];
      range[i] = depth;
    }
  if (cfg.fog > 0.0)
    for (std::size_t i = 0; i < n; ++i) {
      const double weight = std::min(1.0, cfg.fog * std::max(0.0, range[i]));
      for (int c = 0; c < 3; ++c) radiance[i * 3 + c] = (1.0 - weight) * radiance[i * 3 + c] + weight * fog_gray;
    }
  // sensor noise; the draw sequence does not depend on the fog level
  std::vector<float> a(n * 3), b(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (int c = 0; c < 3; ++c) a[i * 3 + c] = clamp01(radiance[i * 3 + c] + appearance_noise * gen.normal());
    b[i] = clamp01(range[i] + range_noise * gen.normal());
  }
  s.a = Image(h, w, 3, std::move(a));
  s.b = Image(h, w, 1, std::move(b));
  s.labels = LabelMap(h, w, scene_num_classes, std::move(labels));
  return s;
}

// Applies `c` to its target modality of the scene (fog uses the scene's range).
inline Scene corrupt_scene(const Scene& s, const Corruption& c) {
  Scene out = s;
  if (c.target == modality::a)
    out.a = apply_corruption(s.a, c, &s.b);
  else if (c.target == modality::b)
    out.b = apply_corruption(s.b, c, &s.b);
  else
    throw validation_error("corrupt_scene: target must be a single modality");
  out.corruption = c;
  return out;
}

// ---------------------------------------------------------------------------
// Datasets

struct dataset_config {
  int train = 600;
  int val = 60;
  int test = 60;
  double fog_severity = 0.5;  // in-distribution fog level
  std::uint64_t seed = 0;
  scene_config scene;
};

struct Dataset {
  std::vector<Scene> train, val, test;
};

enum class split_id : std::uint64_t { train = 1, val = 2, test = 3 };

inline std::uint64_t scene_seed(std::uint64_t seed, split_id split, int index) {
  return derive_seed(seed, static_cast<std::uint64_t>(split), static_cast<std::uint64_t>(index));
}

// Train and val alternate clean / fog-rendered scenes; test scenes are clean
// and get their condition applied at evaluation time.
inline Dataset build_dataset(const dataset_config& cfg) {
  require(cfg.train >= 1 && cfg.val >= 1 && cfg.test >= 1, "build_dataset: split sizes must be >= 1");
  Dataset d;
  auto make = [&](split_id split, int count, bool fog_schedule) {
    std::vector<Scene> out;
    out.reserve(count);
    for (int i = 0; i < count; ++i) {
      scene_config sc = cfg.scene;
      sc.fog = fog_schedule && i % 2 == 1 ? cfg.fog_severity : 0.0;
      out.push_back(generate_scene(scene_seed(cfg.seed, split, i), sc));
    }
    return out;
  };
  d.train = make(split_id::train, cfg.train, true);
  d.val = make(split_id::val, cfg.val, true);
  d.test = make(split_id::test, cfg.test, false);
  return d;
}

struct TestCondition {
  std::string name;
  bool in_distribution = false;
  std::optional<Corruption> corruption;  // seed filled per scene at evaluation
  double weather_fog = 0.0;              // > 0: re-render the scene in fog
};

inline constexpr double hendrycks_severity = 0.6;

// Two in-distribution conditions, seven appearance degradations, three range
// degradations.
inline std::vector<TestCondition> test_conditions(double fog_severity = 0.5) {
  auto cond = [](std::string name, corruption_kind k, double sev, modality m) {
    return TestCondition{std::move(name), false, Corruption{k, sev, m, 0}};
  };
  using ck = corruption_kind;
  return {
      {"fog0", true, std::nullopt, 0.0},
      {"fog50", true, std::nullopt, fog_severity},
      {"a_fog100", false, std::nullopt, 1.0},
      cond("a_motion_blur", ck::motion_blur, hendrycks_severity, modality::a),
      cond("a_frost", ck::streaks, 0.4, modality::a),
      cond("a_snow", ck::streaks, 0.8, modality::a),
      cond("a_brightness", ck::brightness, hendrycks_severity, modality::a),
      cond("a_blackout", ck::blackout, 1.0, modality::a),
      cond("a_impulse", ck::impulse_noise, hendrycks_severity, modality::a),
      cond("b_gaussian", ck::gaussian_noise, hendrycks_severity, modality::b),
      cond("b_shot", ck::shot_noise, hendrycks_severity, modality::b),
      cond("b_impulse", ck::impulse_noise, hendrycks_severity, modality::b),
  };
}

// Fog conditions re-render the (clean) scene from its seed, so `cfg` must be
// the configuration the scene was generated with.
inline Scene apply_condition(const Scene& s, const TestCondition& c, std::uint64_t seed,
                             const scene_config& cfg = {}) {
  if (c.weather_fog > 0.0) {
    require(s.fog == 0.0 && !s.corruption, "apply_condition: fog conditions need a clean scene");
    scene_config sc = cfg;
    sc.fog = c.weather_fog;
    return generate_scene(s.seed, sc);
  }
  if (!c.corruption) return s;
  auto corr = *c.corruption;
  corr.seed = seed;
  return corrupt_scene(s, corr);
}

// ---------------------------------------------------------------------------
// On-disk layout: <dir>/<split>/<scene_id>/{a.unof, b.unof, labels.unol, meta.json}

inline nlohmann::json scene_meta(const Scene& s) {
  nlohmann::json j;
  j["seed"] = s.seed;
  j["fog"] = s.fog;
  j["num_classes"] = scene_num_classes;
  auto& objs = j["objects"] = nlohmann::json::array();
  for (const auto& o : s.objects)
    objs.push_back({{"label", o.label}, {"shape", to_string(o.shape)}, {"cx", o.cx}, {"cy", o.cy},
                    {"size", o.size}, {"depth", o.depth}, {"color", o.color}});
  if (s.corruption)
    j["corruption"] = {{"kind", to_string(s.corruption->kind)},
                       {"severity", s.corruption->severity},
                       {"target", to_string(s.corruption->target)},
                       {"seed", s.corruption->seed}};
  else
    j["corruption"] = nullptr;
  return j;
}

inline void save_scene(const std::filesystem::path& dir, const Scene& s) {
  std::filesystem::create_directories(dir);
  save_tensor((dir / "a.unof").string(), s.a);
  save_tensor((dir / "b.unof").string(), s.b);
  save_labels((dir / "labels.unol").string(), s.labels);
  std::ofstream meta(dir / "meta.json");
  require(static_cast<bool>(meta), "cannot write " + (dir / "meta.json").string());
  meta << scene_meta(s).dump(2) << '\n';
}

inline Scene load_scene(const std::filesystem::path& dir) {
  std::ifstream meta_in(dir / "meta.json");
  require(static_cast<bool>(meta_in), "missing " + (dir / "meta.json").string());
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(meta_in);
  } catch (const nlohmann::json::exception& e) {
    throw validation_error((dir / "meta.json").string() + ": " + e.what());
  }
  Scene s;
  s.a = load_image((dir / "a.unof").string());
  s.b = load_image((dir / "b.unof").string());
  s.labels = load_labels((dir / "labels.unol").string(), meta.value("num_classes", scene_num_classes));
  s.seed = meta.at("seed").get<std::uint64_t>();
  s.fog = meta.value("fog", 0.0);
  for (const auto& o : meta.at("objects")) {
    scene_object so;
    so.label = o.at("label").get<int>();
    const auto shape = o.at("shape").get<std::string>();
    so.shape = shape == "disc" ? shape_kind::disc : shape == "triangle" ? shape_kind::triangle : shape_kind::rectangle;
    so.cx = o.at("cx").get<double>();
    so.cy = o.at("cy").get<double>();
    so.size = o.at("size").get<double>();
    so.depth = o.at("depth").get<double>();
    so.color = o.at("color").get<std::array<double, 3>>();
    s.objects.push_back(so);
  }
  if (!meta.at("corruption").is_null()) {
    const auto& c = meta.at("corruption");
    s.corruption = Corruption{corruption_kind_from_string(c.at("kind").get<std::string>()),
                              c.at("severity").get<double>(),
                              modality_from_string(c.at("target").get<std::string>()),
                              c.at("seed").get<std::uint64_t>()};
  }
  require(same_spatial_shape(s.a, s.b) && same_spatial_shape(s.a, s.labels),
          dir.string() + ": modality shapes differ");
  return s;
}

inline std::string scene_dir_name(int index) {
  std::string id = std::to_string(index);
  return std::string(id.size() < 6 ? 6 - id.size() : 0, '0') + id;
}

inline void save_dataset(const std::filesystem::path& root, const Dataset& d) {
  auto save_split = [&](const char* name, const std::vector<Scene>& scenes) {
    for (std::size_t i = 0; i < scenes.size(); ++i)
      save_scene(root / name / scene_dir_name(static_cast<int>(i)), scenes[i]);
  };
  save_split("train", d.train);
  save_split("val", d.val);
  save_split("test", d.test);
}

inline std::vector<Scene> load_split(const std::filesystem::path& root, const std::string& split) {
  const auto dir = root / split;
  require(std::filesystem::is_directory(dir), "missing split directory: " + dir.string());
  std::vector<std::filesystem::path> scenes;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_directory()) scenes.push_back(e.path());
  std::sort(scenes.begin(), scenes.end());
  std::vector<Scene> out;
  out.reserve(scenes.size());
  for (const auto& p : scenes) out.push_back(load_scene(p));
  return out;
}

inline Dataset load_dataset(const std::filesystem::path& root) {
  return {load_split(root, "train"), load_split(root, "val"), load_split(root, "test")};
}

inline std::vector<labeled_image> samples(std::span<const Scene> scenes, modality m) {
  std::vector<labeled_image> out;
  out.reserve(scenes.size());
  for (const auto& s : scenes) out.push_back(s.sample(m));
  return out;
}

}  // namespace uno
