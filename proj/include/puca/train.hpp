#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "puca/autograd.hpp"
#include "puca/model.hpp"
#include "puca/rng.hpp"

namespace puca::train {

// Raised when training produces a non-finite loss.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class NoiseKind { kIid, kCorrelated };

std::string to_string(NoiseKind k);
NoiseKind noise_kind_from_string(const std::string& s);

struct TrainConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int steps = 2000;
  int batch = 4;
  int patch_size = 32;
  double sigma = 25.0 / 255.0;
  NoiseKind noise_kind = NoiseKind::kIid;
  // Square blur kernel applied to white noise for kCorrelated; rescaled to unit
  // L2 norm so the noise std stays sigma.
  std::vector<std::vector<double>> corr_kernel{{1, 1, 1}, {1, 1, 1}, {1, 1, 1}};
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

// ---- data ---------------------------------------------------------------

struct SynthLayers {
  Tensor smooth;  // low-frequency sinusoid background
  Tensor image;   // background with shapes composited on top, clamped to [0,1]
};

// Procedural clean images (n, channels, size, size) in [0,1]: a few smooth
// sinusoidal gradients plus anti-aliased rectangles and disks.
Tensor synth_clean(Rng& rng, int n, int size, int channels = 1);
SynthLayers synth_clean_layers(Rng& rng, int n, int size, int channels = 1);

// clean + N(0, sigma^2) per pixel, or clean + (K * white) for correlated
// noise, with the convolution evaluated on a padded canvas so every output
// pixel has full support.
Tensor add_noise(const Tensor& clean, double sigma, NoiseKind kind, const std::vector<std::vector<double>>& kernel,
                 Rng& rng);
Tensor add_noise(const Tensor& clean, const TrainConfig& cfg, Rng& rng);

// ---- loss and optimizer -------------------------------------------------

// Mean absolute difference. The subgradient at a tie is 0.
Var l1_loss(const Var& pred, const Var& target);

struct AdamHyper {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::int64_t t = 0;

  static AdamState zeros_like(const ParamStore& params);
};

// One bias-corrected Adam update of a flat parameter array. t is the step
// number after incrementing (>= 1).
void adam_update(std::span<double> w, std::span<const double> g, std::span<double> m, std::span<double> v,
                 std::int64_t t, const AdamHyper& h);

// grads[k] matches the k-th parameter in store order; an empty tensor means
// zero gradient. Re-zeros the masked center taps afterwards.
void adam_step(Model& model, const std::vector<Tensor>& grads, AdamState& state, const AdamHyper& h);

// ---- training -----------------------------------------------------------

struct TrainResult {
  std::vector<double> losses;  // one per step
};

using StepCallback = std::function<void(int step, double loss)>;

// Per step: synthesize a clean batch, add noise, run the PD(pd_train)
// pipeline, L1 against the noisy input, backward, Adam. Deterministic given
// cfg.seed. Throws NumericalError on a non-finite loss.
TrainResult train_self_supervised(Model& model, const TrainConfig& cfg, const StepCallback& on_step = {});

// ---- metrics ------------------------------------------------------------

// 10 log10(peak^2 / MSE); +infinity when the images are identical.
double psnr(const Tensor& a, const Tensor& b, double peak = 1.0);

// Single-scale SSIM with an 11x11 Gaussian window (sigma 1.5), K1 = 0.01,
// K2 = 0.03, dynamic range 1, averaged over valid windows, channels and batch.
double ssim(const Tensor& a, const Tensor& b);

struct Evaluation {
  double psnr_noisy = 0.0;
  double psnr_denoised = 0.0;
  double ssim_noisy = 0.0;
  double ssim_denoised = 0.0;
};

// Denoises every batch item of `noisy` with stride s and scores both the input
// and the output against `clean`.
Evaluation evaluate(const Model& model, const Tensor& clean, const Tensor& noisy, int s);

// ---- loss decomposition -------------------------------------------------

struct LossDecomposition {
  double lhs = 0.0;        // E |g(x) - x|^2
  double risk = 0.0;       // E |g(x) - y|^2
  double noise = 0.0;      // E |x - y|^2
  double rhs = 0.0;        // risk + noise
  double rel_err = 0.0;    // |lhs - rhs| / rhs (0 when both vanish)
  int samples = 0;
};

// Monte Carlo estimate over n_samples draws x = y + N(0, sigma^2); g is
// evaluated on `batch` draws at a time.
LossDecomposition loss_decomposition_check(const std::function<Tensor(const Tensor&)>& g, const Tensor& clean,
                                           double sigma, int n_samples, Rng& rng, int batch = 16);

}  // namespace puca::train
