#include "puca/model.hpp"

#include <cmath>

#include "puca/nn.hpp"
#include "puca/ops.hpp"

namespace puca {

void ParamStore::add(std::string name, Tensor value) {
  if (contains(name)) throw std::invalid_argument("duplicate parameter '" + name + "'");
  index_.emplace(name, items_.size());
  items_.emplace_back(std::move(name), std::move(value));
}

const Tensor& ParamStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
  return items_[it->second].second;
}

Tensor& ParamStore::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
  return items_[it->second].second;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : items_) n += t.size();
  return n;
}

void Model::enforce_mask() {
  Tensor& w = params.get(kMaskedWeight);
  const int k = w.shape().h;
  for (int o = 0; o < w.shape().n; ++o)
    for (int i = 0; i < w.shape().c; ++i) w.at(o, i, k / 2, k / 2) = 0.0;
}

BoundParams::BoundParams(const Model& model, Tape* tape) : BoundParams(model.params, tape) {}

BoundParams::BoundParams(const ParamStore& params, Tape* tape) {
  vars_.reserve(params.size());
  for (const auto& [name, value] : params) {
    index_.emplace(name, vars_.size());
    vars_.emplace_back(name, tape ? tape->leaf(value) : Var(value));
  }
}

const Var& BoundParams::operator[](const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
  return vars_[it->second].second;
}

namespace {

Tensor uniform_weight(const Shape& s, int fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  return Tensor::uniform(s, rng, -bound, bound);
}

void add_conv(ParamStore& store, const std::string& name, const nn::ConvSpec& spec, Rng& rng) {
  const int fan_in = spec.in_channels / spec.groups * spec.kernel * spec.kernel;
  store.add(name + ".weight", uniform_weight(spec.weight_shape(), fan_in, rng));
  store.add(name + ".bias", Tensor(spec.bias_shape()));
}

nn::ConvSpec pointwise(int in, int out) { return {in, out, 1, 1, 1, false}; }

Var conv(const BoundParams& p, const std::string& name, const Var& x, const nn::ConvSpec& spec) {
  return nn::conv2d(x, p[name + ".weight"], p[name + ".bias"], spec);
}

Var conv1x1(const BoundParams& p, const std::string& name, const Var& x, int out) {
  return conv(p, name, x, pointwise(x.shape().c, out));
}

std::string dab_name(const std::string& stage, int j) { return stage + ".dab" + std::to_string(j); }

}  // namespace

void add_dab_params(ParamStore& store, const std::string& prefix, int channels, Rng& rng) {
  const int c = channels, c2 = 2 * channels;
  store.add(prefix + ".norm1.gamma", Tensor::ones({1, c, 1, 1}));
  store.add(prefix + ".norm1.beta", Tensor::zeros({1, c, 1, 1}));
  add_conv(store, prefix + ".conv_in", pointwise(c, c2), rng);
  add_conv(store, prefix + ".ddc", {c2, c2, 3, 1, c2, false}, rng);
  add_conv(store, prefix + ".sca", pointwise(c, c), rng);
  add_conv(store, prefix + ".conv_out", pointwise(c, c), rng);
  store.add(prefix + ".norm2.gamma", Tensor::ones({1, c, 1, 1}));
  store.add(prefix + ".norm2.beta", Tensor::zeros({1, c, 1, 1}));
  add_conv(store, prefix + ".ffn_in", pointwise(c, c2), rng);
  add_conv(store, prefix + ".ffn_out", pointwise(c, c), rng);
}

ParamStore init_params(const PucaConfig& cfg, Rng& rng) {
  ParamStore store;
  const int C = cfg.base_channels;
  const int k = cfg.masked_kernel();
  const int f2 = cfg.patch * cfg.patch;

  add_conv(store, "head.pre", pointwise(cfg.in_channels, C), rng);
  add_conv(store, "head.masked", {C, C, k, 1, 1, true}, rng);
  add_conv(store, "head.conv1", pointwise(C, C), rng);
  add_conv(store, "head.conv2", pointwise(C, C), rng);

  for (int i = 1; i < cfg.levels; ++i) {
    const std::string stage = "enc" + std::to_string(i);
    const int ci = cfg.channels_at(i);
    for (int j = 0; j < cfg.dabs_per_level[static_cast<std::size_t>(i - 1)]; ++j) {
      add_dab_params(store, dab_name(stage, j), ci, rng);
    }
    add_conv(store, stage + ".down", pointwise(ci * f2, 2 * ci), rng);
  }
  for (int j = 0; j < cfg.dabs_bottleneck; ++j) add_dab_params(store, dab_name("mid", j), cfg.channels_at(cfg.levels), rng);
  for (int i = cfg.levels - 1; i >= 1; --i) {
    const std::string stage = "dec" + std::to_string(i);
    const int ci = cfg.channels_at(i);
    add_conv(store, stage + ".up", pointwise(2 * ci, ci * f2), rng);
    add_conv(store, stage + ".fuse", pointwise(2 * ci, ci), rng);
    for (int j = 0; j < cfg.dabs_per_level[static_cast<std::size_t>(i - 1)]; ++j) {
      add_dab_params(store, dab_name(stage, j), ci, rng);
    }
  }
  add_conv(store, "tail.conv1", pointwise(C, C), rng);
  add_conv(store, "tail.conv2", pointwise(C, cfg.in_channels), rng);

  Tensor& w = store.get(Model::kMaskedWeight);
  for (int o = 0; o < C; ++o)
    for (int i = 0; i < C; ++i) w.at(o, i, k / 2, k / 2) = 0.0;
  return store;
}

Model build_model(const PucaConfig& config, bool allow_non_invariant) {
  config.validate();
  if (!config.j_invariant() && !allow_non_invariant) {
    throw ConfigError("config is not J-invariant (downsample=" + to_string(config.downsample) + ", patch " +
                      std::to_string(config.patch) + ", dilation " + std::to_string(config.dilation) +
                      "); pass allow_non_invariant for negative-control builds");
  }
  Rng rng(config.seed);
  return Model{config, init_params(config, rng)};
}

Var dab_forward(const Var& x, const BoundParams& p, const std::string& prefix, int dilation, const ForwardOptions& opts) {
  const int c = x.shape().c;
  if (c % 2 != 0) throw ShapeError("dab_forward: channel count must be even, got " + std::to_string(c));
  if (!(p[prefix + ".norm1.gamma"].shape() == Shape{1, c, 1, 1})) {
    throw ShapeError("dab_forward: block '" + prefix + "' expects " + p[prefix + ".norm1.gamma"].shape().str() +
                     " channels, input is " + x.shape().str());
  }
  Var y = nn::layer_norm(x, p[prefix + ".norm1.gamma"], p[prefix + ".norm1.beta"]);
  y = conv1x1(p, prefix + ".conv_in", y, 2 * c);
  y = conv(p, prefix + ".ddc", y, {2 * c, 2 * c, 3, dilation, 2 * c, false});
  y = nn::simple_gate(y);
  y = nn::sca(y, p[prefix + ".sca.weight"], p[prefix + ".sca.bias"], {dilation, opts.hold_attention});
  y = conv1x1(p, prefix + ".conv_out", y, c);
  const Var x1 = add(x, y);

  Var z = nn::layer_norm(x1, p[prefix + ".norm2.gamma"], p[prefix + ".norm2.beta"]);
  z = conv1x1(p, prefix + ".ffn_in", z, 2 * c);
  z = nn::simple_gate(z);
  z = conv1x1(p, prefix + ".ffn_out", z, c);
  return add(x1, z);
}

Var head_pre(const BoundParams& params, const Var& image) {
  const Var& w = params["head.pre.weight"];
  return conv1x1(params, "head.pre", image, w.shape().n);
}

Var forward_features(const Model& model, const BoundParams& p, const Var& features, const ForwardOptions& opts) {
  const PucaConfig& cfg = model.config;
  const int C = cfg.base_channels;
  const int d = cfg.dilation;
  const int m = cfg.spatial_multiple();
  const Shape& s = features.shape();
  if (s.c != C) throw ShapeError("forward: expected " + std::to_string(C) + " feature channels, got " + s.str());
  if (s.h % m != 0 || s.w % m != 0) {
    throw ShapeError("forward: spatial dims " + std::to_string(s.h) + "x" + std::to_string(s.w) +
                     " must be a multiple of " + std::to_string(m));
  }
  const int f = cfg.patch;
  auto down = [&](const Var& v) {
    return cfg.downsample == Downsample::kPatch ? nn::patch_unshuffle(v, f) : nn::pixel_unshuffle(v, f);
  };
  auto up = [&](const Var& v) {
    return cfg.downsample == Downsample::kPatch ? nn::patch_shuffle(v, f) : nn::pixel_shuffle(v, f);
  };

  Var x = conv(p, "head.masked", features, {C, C, cfg.masked_kernel(), 1, 1, true});
  x = conv1x1(p, "head.conv1", x, C);
  x = conv1x1(p, "head.conv2", x, C);

  std::vector<Var> skips;
  for (int i = 1; i < cfg.levels; ++i) {
    const std::string stage = "enc" + std::to_string(i);
    for (int j = 0; j < cfg.dabs_per_level[static_cast<std::size_t>(i - 1)]; ++j) {
      x = dab_forward(x, p, dab_name(stage, j), d, opts);
    }
    skips.push_back(x);
    x = conv1x1(p, stage + ".down", down(x), 2 * cfg.channels_at(i));
  }
  for (int j = 0; j < cfg.dabs_bottleneck; ++j) x = dab_forward(x, p, dab_name("mid", j), d, opts);
  for (int i = cfg.levels - 1; i >= 1; --i) {
    const std::string stage = "dec" + std::to_string(i);
    const int ci = cfg.channels_at(i);
    x = up(conv1x1(p, stage + ".up", x, ci * f * f));
    x = conv1x1(p, stage + ".fuse", nn::channel_concat(x, skips[static_cast<std::size_t>(i - 1)]), ci);
    for (int j = 0; j < cfg.dabs_per_level[static_cast<std::size_t>(i - 1)]; ++j) {
      x = dab_forward(x, p, dab_name(stage, j), d, opts);
    }
  }
  x = conv1x1(p, "tail.conv1", x, C);
  return conv1x1(p, "tail.conv2", x, cfg.in_channels);
}

Var forward(const Model& model, const BoundParams& params, const Var& x_pd, const ForwardOptions& opts) {
  if (x_pd.shape().c != model.config.in_channels) {
    throw ShapeError("forward: expected " + std::to_string(model.config.in_channels) + " input channels, got " +
                     x_pd.shape().str());
  }
  return forward_features(model, params, head_pre(params, x_pd), opts);
}

Tensor forward(const Model& model, const Tensor& x_pd) {
  const BoundParams params(model, nullptr);
  return forward(model, params, Var(x_pd)).value();
}

int round_up(int n, int m) { return (n + m - 1) / m * m; }

Var denoise(const Model& model, const BoundParams& params, const Var& image, int s, const ForwardOptions& opts) {
  if (s < 1) throw ShapeError("denoise: PD stride must be >= 1");
  const Shape& is = image.shape();
  if (is.c != model.config.in_channels) {
    throw ShapeError("denoise: expected " + std::to_string(model.config.in_channels) + " channels, got " + is.str());
  }
  const int m = s * model.config.spatial_multiple();
  const int ph = round_up(is.h, m), pw = round_up(is.w, m);
  Var x = nn::pad_zero(image, ph - is.h, pw - is.w);
  x = head_pre(params, x);
  x = nn::pd_down(x, s);
  x = forward_features(model, params, x, opts);
  x = nn::pd_up(x, s);
  return nn::crop(x, is.h, is.w);
}

Tensor denoise(const Model& model, const Tensor& image, int s) {
  const BoundParams params(model, nullptr);
  return denoise(model, params, Var(image), s).value();
}

}  // namespace puca
