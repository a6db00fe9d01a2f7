#pragma once

// Shared field types, numeric kernels, seeding and the binary tensor format.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace uno {

static_assert(std::endian::native == std::endian::little,
              "tensor files are written in host byte order");

// Bad shapes, bad arguments, unreadable files. The CLI maps this to exit 2.
class validation_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite losses or gradients, divergence. The CLI maps this to exit 3.
class numerical_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw validation_error(what);
}

// ---------------------------------------------------------------------------
// Seeding and random draws
//
// std distributions are implementation-defined, so draws go through these
// helpers to keep datasets and results bit-identical across toolchains.

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(splitmix64(seed) ^ splitmix64(stream + 0x632be59bd9b4e019ULL));
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  return derive_seed(derive_seed(seed, a), b);
}

class rng {
 public:
  explicit rng(std::uint64_t seed) : state_(splitmix64(seed) | 1ULL) {}

  std::uint64_t next() {
    // xorshift64*
    state_ ^= state_ >> 12;
    state_ ^= state_ << 25;
    state_ ^= state_ >> 27;
    return state_ * 0x2545f4914f6cdd1dULL;
  }

  // [0, 1)
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // [lo, hi] inclusive
  int uniform_int(int lo, int hi) {
    const auto span = static_cast<std::uint64_t>(hi - lo + 1);
    return lo + static_cast<int>(next() % span);
  }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * M_PI * u2);
    has_spare_ = true;
    return r * std::cos(2.0 * M_PI * u2);
  }

  int poisson(double lambda) {
    if (lambda <= 0.0) return 0;
    if (lambda > 30.0) {
      const double v = std::round(lambda + std::sqrt(lambda) * normal());
      return v < 0.0 ? 0 : static_cast<int>(v);
    }
    const double limit = std::exp(-lambda);
    int k = 0;
    double p = uniform();
    while (p > limit) {
      ++k;
      p *= uniform();
    }
    return k;
  }

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// ---------------------------------------------------------------------------
// Fields
//
// All maps are pixel-major: the channel vector of pixel (y, x) is contiguous.

namespace detail {

template <typename T>
class dense_field {
 public:
  using value_type = T;

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  std::size_t pixel_count() const {
    return static_cast<std::size_t>(height_) * static_cast<std::size_t>(width_);
  }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<const T> values() const { return data_; }
  std::span<const T> pixel(std::size_t index) const {
    return {data_.data() + index * static_cast<std::size_t>(channels_),
            static_cast<std::size_t>(channels_)};
  }
  std::span<const T> pixel(int y, int x) const {
    return pixel(static_cast<std::size_t>(y) * width_ + x);
  }
  T at(int y, int x, int c = 0) const {
    return data_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
  }

  friend bool operator==(const dense_field&, const dense_field&) = default;

 protected:
  dense_field() = default;
  dense_field(int height, int width, int channels, std::vector<T> data)
      : height_(height), width_(width), channels_(channels), data_(std::move(data)) {
    require(height >= 0 && width >= 0 && channels >= 1, "field: invalid dimensions");
    require(data_.size() == pixel_count() * static_cast<std::size_t>(channels),
            "field: data length does not match H*W*C");
  }

  int height_ = 0;
  int width_ = 0;
  int channels_ = 1;
  std::vector<T> data_;
};

inline void require_finite(std::span<const float> v, const char* what) {
  for (float x : v)
    if (!std::isfinite(x)) throw validation_error(std::string(what) + ": non-finite value");
}

}  // namespace detail

class Image : public detail::dense_field<float> {
 public:
  Image() = default;
  Image(int height, int width, int channels, std::vector<float> data)
      : dense_field(height, width, channels, std::move(data)) {
    detail::require_finite(data_, "Image");
  }
  static Image filled(int height, int width, int channels, float value) {
    return Image(height, width, channels,
                 std::vector<float>(static_cast<std::size_t>(height) * width * channels, value));
  }
};

class LogitMap : public detail::dense_field<float> {
 public:
  LogitMap() = default;
  LogitMap(int height, int width, int num_classes, std::vector<float> data)
      : dense_field(height, width, num_classes, std::move(data)) {
    detail::require_finite(data_, "LogitMap");
  }
  int num_classes() const { return channels_; }
};

class ProbMap : public detail::dense_field<float> {
 public:
  static constexpr double sum_tolerance = 1e-6;

  ProbMap() = default;
  ProbMap(int height, int width, int num_classes, std::vector<float> data)
      : dense_field(height, width, num_classes, std::move(data)) {
    for (std::size_t i = 0; i < pixel_count(); ++i) {
      double sum = 0.0;
      for (float p : pixel(i)) {
        require(p >= 0.0f && p <= 1.0f, "ProbMap: entry outside [0,1]");
        sum += p;
      }
      require(std::abs(sum - 1.0) <= sum_tolerance, "ProbMap: pixel does not sum to 1");
    }
  }
  int num_classes() const { return channels_; }
};

class UncertaintyMap : public detail::dense_field<float> {
 public:
  UncertaintyMap() = default;
  UncertaintyMap(int height, int width, std::vector<float> data)
      : dense_field(height, width, 1, std::move(data)) {
    detail::require_finite(data_, "UncertaintyMap");
    for (float v : data_) require(v >= 0.0f, "UncertaintyMap: negative value");
  }
};

class TemperatureMap : public detail::dense_field<float> {
 public:
  static constexpr float min_value = 1e-3f;
  static constexpr float max_value = 1e3f;

  TemperatureMap() = default;
  TemperatureMap(int height, int width, std::vector<float> data)
      : dense_field(height, width, 1, std::move(data)) {
    for (float v : data_)
      require(v >= min_value && v <= max_value, "TemperatureMap: value outside [1e-3, 1e3]");
  }
  static TemperatureMap constant(int height, int width, float t) {
    return TemperatureMap(height, width,
                          std::vector<float>(static_cast<std::size_t>(height) * width, t));
  }
};

class LabelMap {
 public:
  LabelMap() = default;
  LabelMap(int height, int width, int num_classes, std::vector<std::uint8_t> labels)
      : height_(height), width_(width), num_classes_(num_classes), labels_(std::move(labels)) {
    require(height >= 0 && width >= 0, "LabelMap: invalid dimensions");
    require(num_classes >= 1 && num_classes <= 256, "LabelMap: invalid class count");
    require(labels_.size() == static_cast<std::size_t>(height) * width,
            "LabelMap: data length does not match H*W");
    for (auto l : labels_) require(l < num_classes, "LabelMap: label out of range");
  }

  int height() const { return height_; }
  int width() const { return width_; }
  int num_classes() const { return num_classes_; }
  std::size_t pixel_count() const { return labels_.size(); }
  std::span<const std::uint8_t> labels() const { return labels_; }
  int at(int y, int x) const { return labels_[static_cast<std::size_t>(y) * width_ + x]; }
  int operator[](std::size_t i) const { return labels_[i]; }

  friend bool operator==(const LabelMap&, const LabelMap&) = default;

 private:
  int height_ = 0;
  int width_ = 0;
  int num_classes_ = 1;
  std::vector<std::uint8_t> labels_;
};

template <typename A, typename B>
bool same_spatial_shape(const A& a, const B& b) {
  return a.height() == b.height() && a.width() == b.width();
}

// Stacks channels of two equally sized images (a's channels first).
inline Image concat_channels(const Image& a, const Image& b) {
  require(same_spatial_shape(a, b), "concat_channels: spatial shape mismatch");
  const int ca = a.channels();
  const int cb = b.channels();
  std::vector<float> out;
  out.reserve(a.pixel_count() * (ca + cb));
  for (std::size_t i = 0; i < a.pixel_count(); ++i) {
    auto pa = a.pixel(i);
    auto pb = b.pixel(i);
    out.insert(out.end(), pa.begin(), pa.end());
    out.insert(out.end(), pb.begin(), pb.end());
  }
  return Image(a.height(), a.width(), ca + cb, std::move(out));
}

// ---------------------------------------------------------------------------
// Softmax and argmax

inline std::vector<double> softmax(std::span<const double> logits) {
  require(!logits.empty(), "softmax: empty input");
  double max_logit = -std::numeric_limits<double>::infinity();
  for (double v : logits) {
    require(std::isfinite(v), "softmax: non-finite input");
    max_logit = std::max(max_logit, v);
  }
  std::vector<double> out(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - max_logit);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return out;
}

inline std::vector<double> softmax(std::initializer_list<double> logits) {
  return softmax(std::span<const double>(logits.begin(), logits.size()));
}

// Per-pixel softmax of logits multiplied by scale(pixel index).
template <typename ScaleFn>
ProbMap scaled_softmax(const LogitMap& logits, ScaleFn&& scale) {
  const int nc = logits.num_classes();
  std::vector<float> out(logits.size());
  std::vector<double> buf(nc);
  for (std::size_t i = 0; i < logits.pixel_count(); ++i) {
    const double s = scale(i);
    auto px = logits.pixel(i);
    for (int c = 0; c < nc; ++c) buf[c] = static_cast<double>(px[c]) * s;
    auto p = softmax(buf);
    for (int c = 0; c < nc; ++c) out[i * nc + c] = static_cast<float>(p[c]);
  }
  return ProbMap(logits.height(), logits.width(), nc, std::move(out));
}

inline ProbMap softmax(const LogitMap& logits) {
  return scaled_softmax(logits, [](std::size_t) { return 1.0; });
}

template <typename T>
int argmax(std::span<const T> v) {
  int best = 0;
  for (int c = 1; c < static_cast<int>(v.size()); ++c)
    if (v[c] > v[best]) best = c;
  return best;
}

inline LabelMap argmax_labels(const ProbMap& p) {
  std::vector<std::uint8_t> labels(p.pixel_count());
  for (std::size_t i = 0; i < p.pixel_count(); ++i)
    labels[i] = static_cast<std::uint8_t>(argmax(p.pixel(i)));
  return LabelMap(p.height(), p.width(), p.num_classes(), std::move(labels));
}

// ---------------------------------------------------------------------------
// Binary tensor files
//
// f32 tensors: "UNOF0001", u32 H, u32 W, u32 C, then H*W*C little-endian f32
// in pixel-major order. Label maps: "UNOL0001", u32 H, u32 W, u32 C (=1),
// then H*W u8.

inline constexpr std::string_view tensor_magic = "UNOF0001";
inline constexpr std::string_view label_magic = "UNOL0001";

struct raw_tensor {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<float> data;
};

namespace detail {

inline void write_header(std::ostream& out, std::string_view magic, int h, int w, int c) {
  out.write(magic.data(), static_cast<std::streamsize>(magic.size()));
  const std::array<std::uint32_t, 3> dims{static_cast<std::uint32_t>(h),
                                          static_cast<std::uint32_t>(w),
                                          static_cast<std::uint32_t>(c)};
  out.write(reinterpret_cast<const char*>(dims.data()), sizeof(dims));
}

inline std::array<std::uint32_t, 3> read_header(std::istream& in, std::string_view magic) {
  std::array<char, 8> m{};
  in.read(m.data(), m.size());
  require(in && std::string_view(m.data(), m.size()) == magic,
          "tensor file: bad magic, expected " + std::string(magic));
  std::array<std::uint32_t, 3> dims{};
  in.read(reinterpret_cast<char*>(dims.data()), sizeof(dims));
  require(static_cast<bool>(in), "tensor file: truncated header");
  return dims;
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), "cannot open for writing: " + path);
  return out;
}

inline std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), "cannot open for reading: " + path);
  return in;
}

}  // namespace detail

inline void write_tensor(std::ostream& out, int h, int w, int c, std::span<const float> data) {
  require(data.size() == static_cast<std::size_t>(h) * w * c, "write_tensor: size mismatch");
  detail::write_header(out, tensor_magic, h, w, c);
  out.write(reinterpret_cast<const char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(float)));
}

inline raw_tensor read_tensor(std::istream& in) {
  const auto dims = detail::read_header(in, tensor_magic);
  raw_tensor t{static_cast<int>(dims[0]), static_cast<int>(dims[1]), static_cast<int>(dims[2]), {}};
  t.data.resize(static_cast<std::size_t>(dims[0]) * dims[1] * dims[2]);
  in.read(reinterpret_cast<char*>(t.data.data()),
          static_cast<std::streamsize>(t.data.size() * sizeof(float)));
  require(static_cast<bool>(in), "tensor file: truncated payload");
  return t;
}

template <typename Field>
void save_tensor(const std::string& path, const Field& f) {
  auto out = detail::open_out(path);
  write_tensor(out, f.height(), f.width(), f.channels(), f.values());
  require(static_cast<bool>(out), "write failed: " + path);
}

inline raw_tensor load_tensor(const std::string& path) {
  auto in = detail::open_in(path);
  return read_tensor(in);
}

inline Image load_image(const std::string& path) {
  auto t = load_tensor(path);
  return Image(t.height, t.width, t.channels, std::move(t.data));
}

inline void save_labels(const std::string& path, const LabelMap& labels) {
  auto out = detail::open_out(path);
  detail::write_header(out, label_magic, labels.height(), labels.width(), 1);
  out.write(reinterpret_cast<const char*>(labels.labels().data()),
            static_cast<std::streamsize>(labels.pixel_count()));
  require(static_cast<bool>(out), "write failed: " + path);
}

inline LabelMap load_labels(const std::string& path, int num_classes) {
  auto in = detail::open_in(path);
  const auto dims = detail::read_header(in, label_magic);
  require(dims[2] == 1, "label file: expected one channel");
  std::vector<std::uint8_t> labels(static_cast<std::size_t>(dims[0]) * dims[1]);
  in.read(reinterpret_cast<char*>(labels.data()), static_cast<std::streamsize>(labels.size()));
  require(static_cast<bool>(in), "label file: truncated payload");
  return LabelMap(static_cast<int>(dims[0]), static_cast<int>(dims[1]), num_classes,
                  std::move(labels));
}

// ---------------------------------------------------------------------------
// Netpbm dumps for visual inspection

// Grayscale PGM; values are linearly mapped from [lo, hi] to [0, 255].
template <typename Field>
void save_pgm(const std::string& path, const Field& f, double lo, double hi, int channel = 0) {
  require(hi > lo, "save_pgm: empty range");
  auto out = detail::open_out(path);
  out << "P5\n" << f.width() << ' ' << f.height() << "\n255\n";
  for (int y = 0; y < f.height(); ++y)
    for (int x = 0; x < f.width(); ++x) {
      const double v = (static_cast<double>(f.at(y, x, channel)) - lo) / (hi - lo);
      out.put(static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0))));
    }
}

inline std::array<unsigned char, 3> label_color(int label) {
  static constexpr std::array<std::array<unsigned char, 3>, 8> palette{{
      {70, 70, 70}, {220, 40, 40}, {40, 80, 220}, {230, 200, 40},
      {40, 180, 80}, {170, 60, 200}, {255, 140, 0}, {0, 200, 200}}};
  return palette[static_cast<std::size_t>(label) % palette.size()];
}

inline void save_label_ppm(const std::string& path, const LabelMap& labels) {
  auto out = detail::open_out(path);
  out << "P6\n" << labels.width() << ' ' << labels.height() << "\n255\n";
  for (std::size_t i = 0; i < labels.pixel_count(); ++i) {
    const auto rgb = label_color(labels[i]);
    out.write(reinterpret_cast<const char*>(rgb.data()), 3);
  }
}

}  // namespace uno
