#pragma once

#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "puca/autograd.hpp"
#include "puca/config.hpp"
#include "puca/rng.hpp"

namespace puca {

// Named parameters in insertion order.
class ParamStore {
 public:
  void add(std::string name, Tensor value);
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  const Tensor& get(const std::string& name) const;
  Tensor& get(const std::string& name);

  std::size_t size() const { return items_.size(); }
  std::size_t scalar_count() const;

  auto begin() const { return items_.begin(); }
  auto end() const { return items_.end(); }
  auto begin() { return items_.begin(); }
  auto end() { return items_.end(); }

 private:
  std::vector<std::pair<std::string, Tensor>> items_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct Model {
  PucaConfig config;
  ParamStore params;

  // Name of the centrally masked conv weight.
  static constexpr const char* kMaskedWeight = "head.masked.weight";

  // Re-zeros the masked center taps.
  void enforce_mask();
};

// Parameters wrapped as Vars for one forward pass: tape leaves when training,
// constants otherwise.
class BoundParams {
 public:
  BoundParams(const Model& model, Tape* tape);
  explicit BoundParams(const ParamStore& params, Tape* tape = nullptr);

  const Var& operator[](const std::string& name) const;
  auto begin() const { return vars_.begin(); }
  auto end() const { return vars_.end(); }

 private:
  std::vector<std::pair<std::string, Var>> vars_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct ForwardOptions {
  // Hold the channel-attention pooled statistics constant in backward. The
  // resulting input gradient is the local (convolutional) receptive field.
  bool hold_attention = false;
};

// Builds the wiring and initial parameters. Throws ConfigError for invalid
// configs, and for configs that break J-invariance unless allow_non_invariant
// is set (negative-control builds).
Model build_model(const PucaConfig& config, bool allow_non_invariant = false);

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases, unit LayerNorm
// gains, zero LayerNorm offsets, masked center taps zero.
ParamStore init_params(const PucaConfig& config, Rng& rng);

// Adds the parameters of one dilated attention block at `prefix`.
void add_dab_params(ParamStore& store, const std::string& prefix, int channels, Rng& rng);

// Two residual sub-blocks:
//   x1  = x  + W_out * SCA(SG(DDC(W_in * LN(x))))
//   out = x1 + W_2 * SG(W_1 * LN(x1))
// where W_in, W_1 expand C -> 2C, DDC is a 3x3 depthwise conv with the given
// dilation, and SCA pools per dilation phase.
Var dab_forward(const Var& x, const BoundParams& params, const std::string& prefix, int dilation,
                const ForwardOptions& opts = {});

// Head 1x1 projection in_channels -> C. Per-pixel, so it commutes with PD.
Var head_pre(const BoundParams& params, const Var& image);

// Everything after the head projection: masked conv, head 1x1s, U-Net, tail.
// Input has C channels in the PD domain; output has in_channels.
Var forward_features(const Model& model, const BoundParams& params, const Var& features,
                     const ForwardOptions& opts = {});

// Network on an already PD-downsampled image; output has the input's shape.
Var forward(const Model& model, const BoundParams& params, const Var& x_pd, const ForwardOptions& opts = {});
Tensor forward(const Model& model, const Tensor& x_pd);

// Full pipeline: zero-pad to a multiple of s * spatial_multiple, head 1x1,
// pd_down(s), network, pd_up(s), crop back to the input size.
Var denoise(const Model& model, const BoundParams& params, const Var& image, int s, const ForwardOptions& opts = {});
Tensor denoise(const Model& model, const Tensor& image, int s);

// Smallest size >= n that is a multiple of m.
int round_up(int n, int m);

}  // namespace puca
