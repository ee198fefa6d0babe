#include <algorithm>
#include <cmath>
#include <numbers>

#include "puca/train.hpp"

namespace puca::train {

std::string to_string(NoiseKind k) { return k == NoiseKind::kIid ? "iid-gaussian" : "correlated-gaussian"; }

NoiseKind noise_kind_from_string(const std::string& s) {
  if (s == "iid-gaussian") return NoiseKind::kIid;
  if (s == "correlated-gaussian") return NoiseKind::kCorrelated;
  throw std::invalid_argument("unknown noise kind '" + s + "' (expected iid-gaussian or correlated-gaussian)");
}

namespace {

void paint_plane(Rng& rng, int size, double* smooth, double* image) {
  const double two_pi = 2.0 * std::numbers::pi;
  std::fill(smooth, smooth + static_cast<std::ptrdiff_t>(size) * size, rng.uniform(0.3, 0.7));
  const int waves = 3;
  for (int k = 0; k < waves; ++k) {
    const double amp = rng.uniform(0.03, 0.1);
    const double fy = rng.uniform(-1.5, 1.5) / size;
    const double fx = rng.uniform(-1.5, 1.5) / size;
    const double phase = rng.uniform(0.0, two_pi);
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) smooth[y * size + x] += amp * std::sin(two_pi * (fy * y + fx * x) + phase);
  }
  std::copy(smooth, smooth + static_cast<std::ptrdiff_t>(size) * size, image);

  const int shapes = 3 + static_cast<int>(rng.below(4));
  for (int s = 0; s < shapes; ++s) {
    const bool disk = rng.uniform() < 0.5;
    const double cy = rng.uniform(0.0, size);
    const double cx = rng.uniform(0.0, size);
    const double ry = rng.uniform(0.08, 0.3) * size;
    const double rx = disk ? ry : rng.uniform(0.08, 0.3) * size;
    const double value = rng.uniform();
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        const double dy = y + 0.5 - cy;
        const double dx = x + 0.5 - cx;
        // Signed distance in pixels; a one-pixel ramp gives the anti-aliasing.
        const double sd = disk ? std::hypot(dy, dx) - ry : std::max(std::abs(dy) - ry, std::abs(dx) - rx);
        const double cover = std::clamp(0.5 - sd, 0.0, 1.0);
        double& px = image[y * size + x];
        px = px * (1.0 - cover) + value * cover;
      }
    }
  }
  for (std::ptrdiff_t k = 0; k < static_cast<std::ptrdiff_t>(size) * size; ++k) {
    image[k] = std::clamp(image[k], 0.0, 1.0);
    smooth[k] = std::clamp(smooth[k], 0.0, 1.0);
  }
}

}  // namespace

SynthLayers synth_clean_layers(Rng& rng, int n, int size, int channels) {
  if (size < 16) throw std::invalid_argument("synth_clean: size must be >= 16, got " + std::to_string(size));
  if (n < 1 || channels < 1) throw std::invalid_argument("synth_clean: n and channels must be positive");
  SynthLayers out{Tensor({n, channels, size, size}), Tensor({n, channels, size, size})};
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < channels; ++c) paint_plane(rng, size, out.smooth.plane(i, c), out.image.plane(i, c));
  return out;
}

Tensor synth_clean(Rng& rng, int n, int size, int channels) {
  return synth_clean_layers(rng, n, size, channels).image;
}

Tensor add_noise(const Tensor& clean, double sigma, NoiseKind kind, const std::vector<std::vector<double>>& kernel,
                 Rng& rng) {
  if (!(sigma >= 0.0)) throw std::invalid_argument("add_noise: sigma must be >= 0");
  Tensor noisy = clean;
  if (sigma == 0.0) return noisy;
  if (kind == NoiseKind::kIid) {
    for (double& v : noisy.data()) v += sigma * rng.normal();
    return noisy;
  }

  const int k = static_cast<int>(kernel.size());
  if (k == 0 || k % 2 == 0) throw std::invalid_argument("add_noise: correlation kernel must be square with odd size");
  double norm2 = 0.0;
  for (const auto& row : kernel) {
    if (static_cast<int>(row.size()) != k) throw std::invalid_argument("add_noise: correlation kernel must be square");
    for (double v : row) norm2 += v * v;
  }
  if (!(norm2 > 0.0)) throw std::invalid_argument("add_noise: correlation kernel is all zero");
  const double scale = sigma / std::sqrt(norm2);

  const Shape& s = clean.shape();
  const int ch = s.h + k - 1;
  const int cw = s.w + k - 1;
  std::vector<double> canvas(static_cast<std::size_t>(ch) * cw);
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      for (double& v : canvas) v = rng.normal();
      double* out = noisy.plane(n, c);
      for (int y = 0; y < s.h; ++y) {
        for (int x = 0; x < s.w; ++x) {
          double acc = 0.0;
          for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) acc += kernel[ky][kx] * canvas[static_cast<std::size_t>(y + ky) * cw + x + kx];
          out[y * s.w + x] += scale * acc;
        }
      }
    }
  }
  return noisy;
}

Tensor add_noise(const Tensor& clean, const TrainConfig& cfg, Rng& rng) {
  return add_noise(clean, cfg.sigma, cfg.noise_kind, cfg.corr_kernel, rng);
}

}  // namespace puca::train
