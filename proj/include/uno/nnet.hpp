#pragma once

// A small CPU network substrate: 3x3 / 1x1 convolutions, ReLU, inverted
// dropout, 2x2 max pooling and 2x nearest upsampling, with hand-written
// backward passes and Adam. Templated on the scalar so the same code runs in
// float for training and in double for finite-difference checks.

#include <uno/core.hpp>

#include <json.hpp>

#include <istream>
#include <ostream>
#include <sstream>

namespace uno::nnet {

enum class layer_kind { conv3x3, conv1x1, relu, dropout, maxpool2, upsample2 };

inline std::string_view to_string(layer_kind k) {
  switch (k) {
    case layer_kind::conv3x3: return "conv3x3";
    case layer_kind::conv1x1: return "conv1x1";
    case layer_kind::relu: return "relu";
    case layer_kind::dropout: return "dropout";
    case layer_kind::maxpool2: return "maxpool2";
    case layer_kind::upsample2: return "upsample2_nearest";
  }
  return "?";
}

inline layer_kind layer_kind_from_string(std::string_view s) {
  for (auto k : {layer_kind::conv3x3, layer_kind::conv1x1, layer_kind::relu, layer_kind::dropout,
                 layer_kind::maxpool2, layer_kind::upsample2})
    if (to_string(k) == s) return k;
  throw validation_error("unknown layer kind: " + std::string(s));
}

// Channel-major activation tensor (C, H, W).
template <typename Real>
struct tensor3 {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<Real> data;

  tensor3() = default;
  tensor3(int c, int h, int w, Real fill = Real(0))
      : channels(c), height(h), width(w), data(static_cast<std::size_t>(c) * h * w, fill) {}

  std::size_t plane() const { return static_cast<std::size_t>(height) * width; }
  Real* channel(int c) { return data.data() + c * plane(); }
  const Real* channel(int c) const { return data.data() + c * plane(); }
  Real& operator()(int c, int y, int x) { return data[c * plane() + y * width + x]; }
  Real operator()(int c, int y, int x) const { return data[c * plane() + y * width + x]; }
  bool same_shape(const tensor3& o) const {
    return channels == o.channels && height == o.height && width == o.width;
  }
};

template <typename Real>
tensor3<Real> to_tensor(const Image& img) {
  tensor3<Real> t(img.channels(), img.height(), img.width());
  const std::size_t n = img.pixel_count();
  for (std::size_t i = 0; i < n; ++i) {
    auto px = img.pixel(i);
    for (int c = 0; c < img.channels(); ++c) t.data[c * n + i] = static_cast<Real>(px[c]);
  }
  return t;
}

template <typename Real>
LogitMap to_logit_map(const tensor3<Real>& t) {
  std::vector<float> out(t.data.size());
  const std::size_t n = t.plane();
  for (std::size_t i = 0; i < n; ++i)
    for (int c = 0; c < t.channels; ++c)
      out[i * t.channels + c] = static_cast<float>(t.data[c * n + i]);
  return LogitMap(t.height, t.width, t.channels, std::move(out));
}

template <typename Real>
struct layer {
  layer_kind kind = layer_kind::relu;
  int in_channels = 0;
  int out_channels = 0;
  double rate = 0.0;  // dropout only
  std::vector<Real> weight;  // [out][in][k][k]
  std::vector<Real> bias;    // [out]

  bool trainable() const { return kind == layer_kind::conv3x3 || kind == layer_kind::conv1x1; }
  int kernel() const { return kind == layer_kind::conv3x3 ? 3 : 1; }
};

enum class pass_mode {
  eval,       // dropout off
  train,      // dropout on
  mc_sample,  // inference with dropout forced on (MC dropout)
};

template <typename Real>
class network {
 public:
  network() = default;
  explicit network(int input_channels) : input_channels_(input_channels) {
    require(input_channels >= 1, "network: input channels must be >= 1");
  }

  int input_channels() const { return input_channels_; }
  int output_channels() const {
    int c = input_channels_;
    for (const auto& l : layers_)
      if (l.trainable()) c = l.out_channels;
    return c;
  }
  const std::vector<layer<Real>>& layers() const { return layers_; }
  std::vector<layer<Real>>& mutable_layers() {
    ++version_;
    return layers_;
  }
  // Bumped on every parameter mutation; caches from older versions are stale.
  std::uint64_t version() const { return version_; }
  void touch() { ++version_; }

  // Spatial dims must be divisible by this (2^number of pooling layers).
  int spatial_divisor() const {
    int d = 1;
    for (const auto& l : layers_)
      if (l.kind == layer_kind::maxpool2) d *= 2;
    return d;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l.weight.size() + l.bias.size();
    return n;
  }

  network& conv3x3(int out_channels) { return add_conv(layer_kind::conv3x3, out_channels); }
  network& conv1x1(int out_channels) { return add_conv(layer_kind::conv1x1, out_channels); }
  network& relu() { return add_simple(layer_kind::relu); }
  network& maxpool2() { return add_simple(layer_kind::maxpool2); }
  network& upsample2() { return add_simple(layer_kind::upsample2); }
  network& dropout(double rate) {
    require(rate >= 0.0 && rate < 1.0, "dropout rate must be in [0,1)");
    add_simple(layer_kind::dropout);
    layers_.back().rate = rate;
    return *this;
  }

  // Uniform(-a, a), a = sqrt(6 / (fan_in + fan_out)); zero bias.
  void initialize(std::uint64_t seed) {
    rng gen(seed);
    for (auto& l : layers_) {
      if (!l.trainable()) continue;
      const int k2 = l.kernel() * l.kernel();
      const double a = std::sqrt(6.0 / ((l.in_channels + l.out_channels) * k2));
      for (auto& w : l.weight) w = static_cast<Real>(gen.uniform(-a, a));
      std::fill(l.bias.begin(), l.bias.end(), Real(0));
    }
    ++version_;
  }

 private:
  network& add_conv(layer_kind kind, int out_channels) {
    require(out_channels >= 1, "conv: out channels must be >= 1");
    layer<Real> l;
    l.kind = kind;
    l.in_channels = current_channels();
    l.out_channels = out_channels;
    l.weight.assign(static_cast<std::size_t>(out_channels) * l.in_channels * l.kernel() * l.kernel(),
                    Real(0));
    l.bias.assign(out_channels, Real(0));
    layers_.push_back(std::move(l));
    ++version_;
    return *this;
  }
  network& add_simple(layer_kind kind) {
    layer<Real> l;
    l.kind = kind;
    l.in_channels = l.out_channels = current_channels();
    layers_.push_back(std::move(l));
    ++version_;
    return *this;
  }
  int current_channels() const { return layers_.empty() ? input_channels_ : layers_.back().out_channels; }

  int input_channels_ = 1;
  std::vector<layer<Real>> layers_;
  std::uint64_t version_ = 0;
};

template <typename To, typename From>
network<To> network_cast(const network<From>& src) {
  network<To> dst(src.input_channels());
  for (const auto& l : src.layers()) {
    switch (l.kind) {
      case layer_kind::conv3x3: dst.conv3x3(l.out_channels); break;
      case layer_kind::conv1x1: dst.conv1x1(l.out_channels); break;
      case layer_kind::relu: dst.relu(); break;
      case layer_kind::dropout: dst.dropout(l.rate); break;
      case layer_kind::maxpool2: dst.maxpool2(); break;
      case layer_kind::upsample2: dst.upsample2(); break;
    }
  }
  auto& out = dst.mutable_layers();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto& s = src.layers()[i];
    out[i].weight.assign(s.weight.begin(), s.weight.end());
    out[i].bias.assign(s.bias.begin(), s.bias.end());
  }
  return dst;
}

// Per-layer parameter gradients, shaped like the layers' weight/bias.
template <typename Real>
struct gradients {
  std::vector<std::vector<Real>> weight;
  std::vector<std::vector<Real>> bias;

  static gradients zeros_like(const network<Real>& net) {
    gradients g;
    for (const auto& l : net.layers()) {
      g.weight.emplace_back(l.weight.size(), Real(0));
      g.bias.emplace_back(l.bias.size(), Real(0));
    }
    return g;
  }

  // this += scale * other (mini-batch accumulation)
  void accumulate(const gradients& other, Real scale = Real(1)) {
    require(other.weight.size() == weight.size(), "gradients: layer count mismatch");
    for (std::size_t li = 0; li < weight.size(); ++li) {
      require(other.weight[li].size() == weight[li].size() && other.bias[li].size() == bias[li].size(),
              "gradients: shape mismatch");
      for (std::size_t k = 0; k < weight[li].size(); ++k) weight[li][k] += scale * other.weight[li][k];
      for (std::size_t k = 0; k < bias[li].size(); ++k) bias[li][k] += scale * other.bias[li][k];
    }
  }
};

template <typename Real>
struct activation_cache {
  const network<Real>* net = nullptr;
  std::uint64_t version = 0;
  std::vector<tensor3<Real>> inputs;            // input to each layer
  std::vector<std::vector<Real>> dropout_scale;  // per dropout layer, else empty
  std::vector<std::vector<std::uint32_t>> pool_index;  // per maxpool layer, else empty
};

template <typename Real>
struct forward_result {
  tensor3<Real> output;
  activation_cache<Real> cache;
};

namespace kernels {

template <typename Real>
void conv_forward(const layer<Real>& l, const tensor3<Real>& in, tensor3<Real>& out) {
  const int h = in.height, w = in.width, k = l.kernel(), r = k / 2;
  out = tensor3<Real>(l.out_channels, h, w);
  for (int o = 0; o < l.out_channels; ++o) {
    Real* dst = out.channel(o);
    std::fill(dst, dst + out.plane(), l.bias[o]);
    for (int i = 0; i < l.in_channels; ++i) {
      const Real* src = in.channel(i);
      const Real* wk = &l.weight[(static_cast<std::size_t>(o) * l.in_channels + i) * k * k];
      for (int ky = 0; ky < k; ++ky) {
        const int dy = ky - r;
        const int y0 = std::max(0, -dy), y1 = std::min(h, h - dy);
        for (int kx = 0; kx < k; ++kx) {
          const int dx = kx - r;
          const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
          const Real wv = wk[ky * k + kx];
          for (int y = y0; y < y1; ++y) {
            Real* drow = dst + y * w;
            const Real* srow = src + (y + dy) * w + dx;
            for (int x = x0; x < x1; ++x) drow[x] += wv * srow[x];
          }
        }
      }
    }
  }
}

template <typename Real>
void conv_backward(const layer<Real>& l, const tensor3<Real>& in, const tensor3<Real>& gout,
                   std::vector<Real>& gw, std::vector<Real>& gb, tensor3<Real>* gin) {
  const int h = in.height, w = in.width, k = l.kernel(), r = k / 2;
  if (gin) *gin = tensor3<Real>(in.channels, h, w);
  // Row-wise partial sums keep the weight-gradient reduction vectorizable.
  std::vector<Real> partial(static_cast<std::size_t>(w));
  for (int o = 0; o < l.out_channels; ++o) {
    const Real* g = gout.channel(o);
    Real sb = 0;
    for (std::size_t p = 0; p < gout.plane(); ++p) sb += g[p];
    gb[o] += sb;
    for (int i = 0; i < l.in_channels; ++i) {
      const Real* src = in.channel(i);
      Real* gsrc = gin ? gin->channel(i) : nullptr;
      const std::size_t base = (static_cast<std::size_t>(o) * l.in_channels + i) * k * k;
      for (int ky = 0; ky < k; ++ky) {
        const int dy = ky - r;
        const int y0 = std::max(0, -dy), y1 = std::min(h, h - dy);
        for (int kx = 0; kx < k; ++kx) {
          const int dx = kx - r;
          const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
          const Real wv = l.weight[base + ky * k + kx];
          std::fill(partial.begin(), partial.end(), Real(0));
          Real* acc = partial.data();
          for (int y = y0; y < y1; ++y) {
            const Real* grow = g + y * w;
            const Real* srow = src + (y + dy) * w + dx;
            for (int x = x0; x < x1; ++x) acc[x] += grow[x] * srow[x];
            if (gsrc) {
              Real* gsrow = gsrc + (y + dy) * w + dx;
              for (int x = x0; x < x1; ++x) gsrow[x] += wv * grow[x];
            }
          }
          Real sum = 0;
          for (int x = x0; x < x1; ++x) sum += acc[x];
          gw[base + ky * k + kx] += sum;
        }
      }
    }
  }
}

}  // namespace kernels

// Runs the network. Dropout masks are drawn from `seed`, so the result is a
// pure function of (net, x, mode, seed).
template <typename Real>
forward_result<Real> forward(const network<Real>& net, const tensor3<Real>& x, pass_mode mode,
                             std::uint64_t seed = 0) {
  require(x.channels == net.input_channels(), "forward: input channel mismatch");
  const int div = net.spatial_divisor();
  require(x.height > 0 && x.width > 0 && x.height % div == 0 && x.width % div == 0,
          "forward: spatial size must be a positive multiple of " + std::to_string(div));

  forward_result<Real> res;
  auto& cache = res.cache;
  cache.net = &net;
  cache.version = net.version();
  const auto& layers = net.layers();
  cache.inputs.reserve(layers.size());
  cache.dropout_scale.resize(layers.size());
  cache.pool_index.resize(layers.size());

  tensor3<Real> cur = x;
  for (std::size_t li = 0; li < layers.size(); ++li) {
    const auto& l = layers[li];
    cache.inputs.push_back(cur);
    tensor3<Real> next;
    switch (l.kind) {
      case layer_kind::conv3x3:
      case layer_kind::conv1x1:
        kernels::conv_forward(l, cur, next);
        break;
      case layer_kind::relu:
        next = std::move(cur);
        for (auto& v : next.data) v = v > Real(0) ? v : Real(0);
        break;
      case layer_kind::dropout: {
        next = std::move(cur);
        if (mode != pass_mode::eval && l.rate > 0.0) {
          rng gen(derive_seed(seed, li));
          const Real keep_scale = static_cast<Real>(1.0 / (1.0 - l.rate));
          auto& mask = cache.dropout_scale[li];
          mask.resize(next.data.size());
          for (std::size_t i = 0; i < mask.size(); ++i) {
            mask[i] = gen.uniform() < l.rate ? Real(0) : keep_scale;
            next.data[i] *= mask[i];
          }
        }
        break;
      }
      case layer_kind::maxpool2: {
        const int oh = cur.height / 2, ow = cur.width / 2;
        next = tensor3<Real>(cur.channels, oh, ow);
        auto& idx = cache.pool_index[li];
        idx.resize(next.data.size());
        for (int c = 0; c < cur.channels; ++c)
          for (int y = 0; y < oh; ++y)
            for (int xx = 0; xx < ow; ++xx) {
              std::uint32_t best = static_cast<std::uint32_t>(c * cur.plane() + (2 * y) * cur.width + 2 * xx);
              for (int dy = 0; dy < 2; ++dy)
                for (int dx = 0; dx < 2; ++dx) {
                  const auto j = static_cast<std::uint32_t>(c * cur.plane() + (2 * y + dy) * cur.width + 2 * xx + dx);
                  if (cur.data[j] > cur.data[best]) best = j;
                }
              const std::size_t o = c * next.plane() + y * ow + xx;
              idx[o] = best;
              next.data[o] = cur.data[best];
            }
        break;
      }
      case layer_kind::upsample2: {
        next = tensor3<Real>(cur.channels, cur.height * 2, cur.width * 2);
        for (int c = 0; c < cur.channels; ++c)
          for (int y = 0; y < next.height; ++y)
            for (int xx = 0; xx < next.width; ++xx) next(c, y, xx) = cur(c, y / 2, xx / 2);
        break;
      }
    }
    cur = std::move(next);
  }
  res.output = std::move(cur);
  return res;
}

// Parameter gradients of sum(output * output_gradient).
template <typename Real>
gradients<Real> backward(const network<Real>& net, const activation_cache<Real>& cache,
                         const tensor3<Real>& output_gradient) {
  if (cache.net != &net || cache.version != net.version() ||
      cache.inputs.size() != net.layers().size())
    throw validation_error("backward: stale activation cache");

  auto grads = gradients<Real>::zeros_like(net);
  const auto& layers = net.layers();
  tensor3<Real> g = output_gradient;
  for (std::size_t li = layers.size(); li-- > 0;) {
    const auto& l = layers[li];
    const auto& in = cache.inputs[li];
    switch (l.kind) {
      case layer_kind::conv3x3:
      case layer_kind::conv1x1: {
        tensor3<Real> gin;
        kernels::conv_backward(l, in, g, grads.weight[li], grads.bias[li], li > 0 ? &gin : nullptr);
        g = std::move(gin);
        break;
      }
      case layer_kind::relu:
        for (std::size_t i = 0; i < g.data.size(); ++i)
          if (!(in.data[i] > Real(0))) g.data[i] = Real(0);
        break;
      case layer_kind::dropout: {
        const auto& mask = cache.dropout_scale[li];
        if (!mask.empty())
          for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] *= mask[i];
        break;
      }
      case layer_kind::maxpool2: {
        tensor3<Real> gin(in.channels, in.height, in.width);
        const auto& idx = cache.pool_index[li];
        for (std::size_t o = 0; o < idx.size(); ++o) gin.data[idx[o]] += g.data[o];
        g = std::move(gin);
        break;
      }
      case layer_kind::upsample2: {
        tensor3<Real> gin(in.channels, in.height, in.width);
        for (int c = 0; c < g.channels; ++c)
          for (int y = 0; y < g.height; ++y)
            for (int x = 0; x < g.width; ++x) gin(c, y / 2, x / 2) += g(c, y, x);
        g = std::move(gin);
        break;
      }
    }
  }
  return grads;
}

// ---------------------------------------------------------------------------
// Adam

template <typename Real>
struct adam_state {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t step = 0;
  gradients<Real> m;
  gradients<Real> v;

  static adam_state for_network(const network<Real>& net, double lr = 1e-3) {
    adam_state s;
    s.learning_rate = lr;
    s.m = gradients<Real>::zeros_like(net);
    s.v = gradients<Real>::zeros_like(net);
    return s;
  }
};

namespace detail {

template <typename Real>
void adam_update(std::vector<Real>& p, const std::vector<Real>& g, std::vector<Real>& m,
                 std::vector<Real>& v, const adam_state<Real>& s, double c1, double c2) {
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double gi = g[i];
    const double mi = s.beta1 * m[i] + (1.0 - s.beta1) * gi;
    const double vi = s.beta2 * v[i] + (1.0 - s.beta2) * gi * gi;
    m[i] = static_cast<Real>(mi);
    v[i] = static_cast<Real>(vi);
    const double mhat = mi / c1;
    const double vhat = vi / c2;
    p[i] = static_cast<Real>(p[i] - s.learning_rate * mhat / (std::sqrt(vhat) + s.epsilon));
  }
}

}  // namespace detail

template <typename Real>
void adam_step(adam_state<Real>& state, network<Real>& net, const gradients<Real>& grads) {
  const auto& layers = net.layers();
  require(grads.weight.size() == layers.size() && state.m.weight.size() == layers.size(),
          "adam_step: gradient/state shape mismatch");
  for (std::size_t li = 0; li < layers.size(); ++li) {
    require(grads.weight[li].size() == layers[li].weight.size() &&
                grads.bias[li].size() == layers[li].bias.size(),
            "adam_step: gradient shape mismatch in layer " + std::to_string(li));
    for (const auto* g : {&grads.weight[li], &grads.bias[li]})
      for (std::size_t i = 0; i < g->size(); ++i)
        if (!std::isfinite(static_cast<double>((*g)[i]))) {
          std::ostringstream msg;
          msg << "adam_step: non-finite gradient in layer " << li << " ("
              << to_string(layers[li].kind) << "), index " << i << ", step " << state.step + 1;
          throw numerical_error(msg.str());
        }
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  auto& mut = net.mutable_layers();
  for (std::size_t li = 0; li < mut.size(); ++li) {
    detail::adam_update(mut[li].weight, grads.weight[li], state.m.weight[li], state.v.weight[li], state, c1, c2);
    detail::adam_update(mut[li].bias, grads.bias[li], state.m.bias[li], state.v.bias[li], state, c1, c2);
  }
}

// ---------------------------------------------------------------------------
// Losses

template <typename Real>
struct loss_result {
  double loss = 0.0;  // mean over pixels
  tensor3<Real> gradient;
};

// Mean per-pixel softmax cross-entropy against integer labels.
template <typename Real>
loss_result<Real> cross_entropy(const tensor3<Real>& logits, const LabelMap& labels) {
  require(logits.height == labels.height() && logits.width == labels.width(),
          "cross_entropy: shape mismatch");
  const std::size_t n = logits.plane();
  const int nc = logits.channels;
  loss_result<Real> r;
  r.gradient = tensor3<Real>(nc, logits.height, logits.width);
  std::vector<double> buf(nc);
  double total = 0.0;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (int c = 0; c < nc; ++c) buf[c] = static_cast<double>(logits.data[c * n + i]);
    const double mx = *std::max_element(buf.begin(), buf.end());
    double sum = 0.0;
    for (double v : buf) sum += std::exp(v - mx);
    const double lse = mx + std::log(sum);
    const int y = labels[i];
    total += lse - buf[y];
    for (int c = 0; c < nc; ++c) {
      const double p = std::exp(buf[c] - lse);
      r.gradient.data[c * n + i] = static_cast<Real>((p - (c == y ? 1.0 : 0.0)) * inv_n);
    }
  }
  r.loss = total * inv_n;
  if (!std::isfinite(r.loss)) throw numerical_error("cross_entropy: non-finite loss");
  return r;
}

// ---------------------------------------------------------------------------
// Gradient check

struct gradient_check_report {
  double max_relative_error = 0.0;
  std::size_t parameters_checked = 0;
  std::size_t worst_layer = 0;
  std::size_t worst_index = 0;
  bool passed = false;
};

// |a - n| / max(|a|, |n|, floor)
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

// Compares backward() against central differences of the mean cross-entropy,
// evaluated in double precision with a fixed dropout seed.
template <typename Real>
gradient_check_report gradient_check(const network<Real>& net, const Image& x, const LabelMap& labels,
                                     double tolerance = 1e-4, double step = 1e-6,
                                     pass_mode mode = pass_mode::train, std::uint64_t seed = 7) {
  require(net.parameter_count() <= 5000, "gradient_check: network too large (> 5000 parameters)");
  auto dnet = network_cast<double>(net);
  const auto input = to_tensor<double>(x);
  auto loss_at = [&](const network<double>& n) {
    return cross_entropy(forward(n, input, mode, seed).output, labels).loss;
  };
  auto fr = forward(dnet, input, mode, seed);
  auto lr = cross_entropy(fr.output, labels);
  const auto grads = backward(dnet, fr.cache, lr.gradient);

  gradient_check_report rep;
  auto& layers = dnet.mutable_layers();
  for (std::size_t li = 0; li < layers.size(); ++li) {
    for (int which = 0; which < 2; ++which) {
      auto& params = which == 0 ? layers[li].weight : layers[li].bias;
      const auto& g = which == 0 ? grads.weight[li] : grads.bias[li];
      for (std::size_t i = 0; i < params.size(); ++i) {
        const double saved = params[i];
        params[i] = saved + step;
        dnet.touch();
        const double up = loss_at(dnet);
        params[i] = saved - step;
        dnet.touch();
        const double down = loss_at(dnet);
        params[i] = saved;
        const double numeric = (up - down) / (2.0 * step);
        const double err = relative_error(g[i], numeric);
        ++rep.parameters_checked;
        if (err > rep.max_relative_error) {
          rep.max_relative_error = err;
          rep.worst_layer = li;
          rep.worst_index = i;
        }
      }
    }
  }
  rep.passed = rep.max_relative_error <= tolerance;
  return rep;
}

// ---------------------------------------------------------------------------
// Checkpoints
//
// One JSON header line (architecture + step + caller metadata), then one
// core-format tensor per trainable layer holding weights followed by biases.

template <typename Real>
void write_checkpoint(std::ostream& out, const network<Real>& net, std::uint64_t step,
                      const nlohmann::json& extra = nlohmann::json::object()) {
  nlohmann::json header;
  header["format"] = "uno-checkpoint-1";
  header["input_channels"] = net.input_channels();
  header["step"] = step;
  header["meta"] = extra;
  auto& arch = header["layers"] = nlohmann::json::array();
  for (const auto& l : net.layers()) {
    nlohmann::json j{{"kind", to_string(l.kind)}, {"out_channels", l.out_channels}};
    if (l.kind == layer_kind::dropout) j["rate"] = l.rate;
    arch.push_back(std::move(j));
  }
  out << header.dump() << '\n';
  for (const auto& l : net.layers()) {
    if (!l.trainable()) continue;
    std::vector<float> blob(l.weight.begin(), l.weight.end());
    blob.insert(blob.end(), l.bias.begin(), l.bias.end());
    write_tensor(out, 1, static_cast<int>(blob.size()), 1, blob);
  }
  require(static_cast<bool>(out), "write_checkpoint: write failed");
}

struct checkpoint_header {
  std::uint64_t step = 0;
  nlohmann::json meta;
};

template <typename Real>
network<Real> read_checkpoint(std::istream& in, checkpoint_header* header_out = nullptr) {
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), "read_checkpoint: missing header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw validation_error(std::string("read_checkpoint: bad header: ") + e.what());
  }
  require(header.value("format", "") == "uno-checkpoint-1", "read_checkpoint: unknown format");
  network<Real> net(header.at("input_channels").get<int>());
  for (const auto& j : header.at("layers")) {
    switch (layer_kind_from_string(j.at("kind").get<std::string>())) {
      case layer_kind::conv3x3: net.conv3x3(j.at("out_channels").get<int>()); break;
      case layer_kind::conv1x1: net.conv1x1(j.at("out_channels").get<int>()); break;
      case layer_kind::relu: net.relu(); break;
      case layer_kind::dropout: net.dropout(j.at("rate").get<double>()); break;
      case layer_kind::maxpool2: net.maxpool2(); break;
      case layer_kind::upsample2: net.upsample2(); break;
    }
  }
  for (auto& l : net.mutable_layers()) {
    if (!l.trainable()) continue;
    auto t = read_tensor(in);
    require(t.data.size() == l.weight.size() + l.bias.size(), "read_checkpoint: parameter size mismatch");
    std::copy_n(t.data.begin(), l.weight.size(), l.weight.begin());
    std::copy(t.data.begin() + static_cast<std::ptrdiff_t>(l.weight.size()), t.data.end(), l.bias.begin());
  }
  if (header_out) {
    header_out->step = header.at("step").get<std::uint64_t>();
    header_out->meta = header.value("meta", nlohmann::json::object());
  }
  return net;
}

}  // namespace uno::nnet
