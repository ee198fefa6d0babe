#include <cmath>

#include "puca/train.hpp"

namespace puca::train {

void TrainConfig::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("train config: " + msg); };
  if (!(lr > 0.0)) fail("lr must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) fail("betas must lie in [0, 1)");
  if (!(eps > 0.0)) fail("eps must be > 0");
  if (steps < 0) fail("steps must be >= 0");
  if (batch < 1) fail("batch must be >= 1");
  if (patch_size < 16) fail("patch_size must be >= 16");
  if (!(sigma >= 0.0)) fail("sigma must be >= 0");
  const std::size_t k = corr_kernel.size();
  if (k == 0 || k % 2 == 0) fail("corr_kernel must be a square kernel of odd size");
  for (const auto& row : corr_kernel)
    if (row.size() != k) fail("corr_kernel must be square");
}

TrainResult train_self_supervised(Model& model, const TrainConfig& cfg, const StepCallback& on_step) {
  cfg.validate();
  const AdamHyper hyper{cfg.lr, cfg.beta1, cfg.beta2, cfg.eps};
  AdamState state = AdamState::zeros_like(model.params);
  Rng data_rng(cfg.seed);
  TrainResult result;
  result.losses.reserve(static_cast<std::size_t>(cfg.steps));

  for (int step = 0; step < cfg.steps; ++step) {
    const Tensor clean = synth_clean(data_rng, cfg.batch, cfg.patch_size, model.config.in_channels);
    const Tensor noisy = add_noise(clean, cfg, data_rng);

    Tape tape;
    const BoundParams params(model, &tape);
    const Var target(noisy);
    const Var out = denoise(model, params, target, model.config.pd_train);
    const Var loss = l1_loss(out, target);
    const double value = loss.value().item();
    if (!std::isfinite(value)) {
      throw NumericalError("training diverged: loss is " + std::to_string(value) + " at step " + std::to_string(step));
    }
    const Gradients grads = tape.backward(loss);
    std::vector<Tensor> flat;
    flat.reserve(model.params.size());
    for (const auto& [name, var] : params) flat.push_back(grads.has(var) ? grads.of(var) : Tensor());
    adam_step(model, flat, state, hyper);

    result.losses.push_back(value);
    if (on_step) on_step(step, value);
  }
  return result;
}

Evaluation evaluate(const Model& model, const Tensor& clean, const Tensor& noisy, int s) {
  require_same_shape(clean.shape(), noisy.shape(), "evaluate");
  std::vector<Tensor> outs;
  for (int n = 0; n < noisy.shape().n; ++n) outs.push_back(denoise(model, noisy.batch_slice(n, n + 1), s));
  const Tensor denoised = stack_batch(outs);
  return {psnr(noisy, clean), psnr(denoised, clean), ssim(noisy, clean), ssim(denoised, clean)};
}

}  // namespace puca::train
