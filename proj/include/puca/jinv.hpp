#pragma once

#include <functional>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "puca/autograd.hpp"
#include "puca/model.hpp"

namespace puca::jinv {

// Image -> image map evaluated on whole batches. Batch items must be
// processed independently; the perturbation tools stack many probes into one
// call.
using ImageFn = std::function<Tensor(const Tensor&)>;
using VarImageFn = std::function<Var(const Var&)>;

enum class Method { kGradient, kPerturbation };

// Influence of every input pixel on one output pixel.
struct DependencyMap {
  int target_i = 0;
  int target_j = 0;
  int h = 0;
  int w = 0;
  std::vector<double> values;  // row-major h x w, non-negative
  Method method = Method::kGradient;

  double at(int i, int j) const { return values[static_cast<std::size_t>(i) * w + j]; }
  double self() const { return at(target_i, target_j); }
  // Number of entries strictly above threshold.
  int support(double threshold) const;
};

// |d sum_c f(x)[0, c, target] / d x| summed over input channels. x must have batch 1.
DependencyMap dependency_map_grad(const VarImageFn& f, const Tensor& x, int ti, int tj);

// values[a][b] = max over input channel, sign and output channel of
// |f(x +- delta e_{c,a,b})[target] - f(x)[target]| / delta.
DependencyMap dependency_map_perturb(const ImageFn& f, const Tensor& x, int ti, int tj, double delta,
                                     int chunk = 16);

struct Violation {
  int i = 0;
  int j = 0;
  double magnitude = 0.0;
};

struct JinvReport {
  int pixels_tested = 0;
  double max_self_dependency = 0.0;
  double tolerance = 0.0;
  std::vector<Violation> violating_pixels;
  bool passed = true;
};

struct JinvOptions {
  double tolerance = 1e-12;
  double delta = 1.0;
  int chunk = 16;
};

// Draws a N(0,1) input of `shape` (batch 1) and n_pixels distinct targets;
// every pixel is tested when n_pixels >= h*w. Each target is perturbed by
// +-delta in every input channel and the change of the output at the same
// pixel is recorded.
JinvReport check_j_invariance(const ImageFn& f, const Shape& shape, int n_pixels, Rng& rng, const JinvOptions& opts = {});

// One-dimensional receptive field of x_J after a (2d-1)-tap centrally masked
// conv followed by `depth` d-dilated 3-tap convs, as offsets relative to J.
struct RfSet {
  int level = 0;
  std::set<int> offsets;
};

RfSet rf_oracle(int d, int depth);

// Two-dimensional analogue: offset pairs (dy, dx).
std::set<std::pair<int, int>> rf_oracle_2d(int d, int depth);

struct Prop2Result {
  bool preserved = true;
  // Dependent offset that lands in x_J's slot, and the position of J inside its
  // p^2 block for which it does.
  std::optional<int> witness;
  int anchor = 0;
};

// Symbolic check of whether patch-unshuffle(p) after the masked + dilated
// stack keeps the blind spot: no dependent position may share x_J's slot,
// slot(i) = p*floor(i/p^2) + i mod p, for any placement of J.
Prop2Result proposition2_harness(int d, int p, int depth);

// Random-weight masked conv followed by `depth` dilated 3x3 convs, all linear,
// single channel in and out.
ImageFn masked_dilated_stack(int d, int depth, Rng& rng, int channels = 1);

// The stack above followed by patch_unshuffle(p), a channel-mixing 1x1 conv and
// patch_shuffle(p): the smallest network on which blind-spot leakage through
// patch unshuffling can show up.
ImageFn prop2_network(int d, int p, int depth, Rng& rng, int channels = 2);

// Brute-force forward receptive field of input position j on a 1 x width image.
std::set<int> perturbation_support_1d(const ImageFn& f, int width, int j);

struct SupportOptions {
  bool hold_attention = true;
  double threshold = 1e-9;
};

// Gradient map of the centre output pixel of the network (no PD) on a random
// size x size input.
DependencyMap model_rf_map(const Model& model, int size, const SupportOptions& opts = {}, std::uint64_t seed = 0);
int rf_support_size(const Model& model, int size, const SupportOptions& opts = {});

// Grayscale heatmap normalized to the map maximum; PNG when the path ends in
// .png, binary PGM otherwise.
void render_map(const DependencyMap& map, const std::string& path);
Tensor heatmap_image(const DependencyMap& map);

}  // namespace puca::jinv
