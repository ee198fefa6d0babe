#pragma once

#include <optional>

#include "puca/autograd.hpp"

namespace puca::nn {

// Stride-1 square convolution with zero padding dilation*(kernel-1)/2, which
// keeps the spatial size. With center_masked the center tap never contributes
// and always receives a zero gradient.
struct ConvSpec {
  int in_channels = 1;
  int out_channels = 1;
  int kernel = 1;
  int dilation = 1;
  int groups = 1;
  bool center_masked = false;

  int padding() const { return dilation * (kernel - 1) / 2; }
  Shape weight_shape() const { return {out_channels, in_channels / groups, kernel, kernel}; }
  Shape bias_shape() const { return {1, out_channels, 1, 1}; }
  void validate() const;
};

Var conv2d(const Var& x, const Var& weight, const std::optional<Var>& bias, const ConvSpec& spec);

// Patch-unshuffle with patch size p: (n,c,h,w) -> (n, c*p^2, h/p, w/p).
// Element (i,j,k) moves to spatial (p*floor(i/p^2) + i%p, p*floor(j/p^2) + j%p)
// and channel c*(p*floor((i%p^2)/p) + floor((j%p^2)/p)) + k, so pixels with the
// same phase inside each p^2 x p^2 block stay spatial neighbours.
Var patch_unshuffle(const Var& x, int p);
Var patch_shuffle(const Var& x, int p);

// Classic space-to-depth: each q x q block becomes q^2 channels,
// channel k*q^2 + dy*q + dx.
Var pixel_unshuffle(const Var& x, int q);
Var pixel_shuffle(const Var& x, int q);

// Pixel-shuffle downsampling. The s^2 phase images x[a::s, b::s] are placed in
// the batch axis at index n*s^2 + a*s + b, so each phase is processed as an
// isolated instance.
Var pd_down(const Var& x, int s);
Var pd_up(const Var& y, int s);

// Per-position normalization across channels followed by a per-channel affine.
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-6);

// First half of the channels times the second half.
Var simple_gate(const Var& x);

struct ScaOptions {
  // Pooling is taken separately over each residue class (y mod period,
  // x mod period). period = 1 is ordinary global average pooling.
  int period = 1;
  // Treat the pooled statistics as constants in backward.
  bool hold_pool = false;
};

// Simplified channel attention: x * fc(pool(x)) with fc a c->c linear map.
Var sca(const Var& x, const Var& fc_weight, const Var& fc_bias, const ScaOptions& opts = {});

Var channel_concat(const Var& a, const Var& b);
Var channel_slice(const Var& x, int begin, int end);

// Zero padding on the bottom and right edges, and its adjoint crop.
Var pad_zero(const Var& x, int bottom, int right);
Var crop(const Var& x, int h, int w);

}  // namespace puca::nn
