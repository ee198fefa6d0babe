#include <algorithm>
#include <cmath>
#include <limits>

#include "puca/train.hpp"

namespace puca::train {

LossDecomposition loss_decomposition_check(const std::function<Tensor(const Tensor&)>& g, const Tensor& clean,
                                           double sigma, int n_samples, Rng& rng, int batch) {
  if (clean.shape().n != 1) throw ShapeError("loss_decomposition_check: clean image must have batch 1");
  if (n_samples < 1) throw std::invalid_argument("loss_decomposition_check: n_samples must be >= 1");
  if (!(sigma >= 0.0)) throw std::invalid_argument("loss_decomposition_check: sigma must be >= 0");
  batch = std::max(batch, 1);
  const std::size_t m = clean.size();

  double sum_gx = 0.0;
  double sum_gy = 0.0;
  double sum_xy = 0.0;
  for (int start = 0; start < n_samples; start += batch) {
    const int count = std::min(batch, n_samples - start);
    Shape bs = clean.shape();
    bs.n = count;
    Tensor x(bs);
    for (int i = 0; i < count; ++i) {
      double* dst = x.raw() + static_cast<std::size_t>(i) * m;
      for (std::size_t k = 0; k < m; ++k) dst[k] = clean.raw()[k] + sigma * rng.normal();
    }
    const Tensor gx = g(x);
    require_same_shape(gx.shape(), x.shape(), "loss_decomposition_check");
    for (int i = 0; i < count; ++i) {
      const std::size_t off = static_cast<std::size_t>(i) * m;
      for (std::size_t k = 0; k < m; ++k) {
        const double xv = x.raw()[off + k];
        const double gv = gx.raw()[off + k];
        const double yv = clean.raw()[k];
        sum_gx += (gv - xv) * (gv - xv);
        sum_gy += (gv - yv) * (gv - yv);
        sum_xy += (xv - yv) * (xv - yv);
      }
    }
  }
  LossDecomposition r;
  r.samples = n_samples;
  r.lhs = sum_gx / n_samples;
  r.risk = sum_gy / n_samples;
  r.noise = sum_xy / n_samples;
  r.rhs = r.risk + r.noise;
  const double diff = std::abs(r.lhs - r.rhs);
  r.rel_err = r.rhs > 0.0 ? diff / r.rhs : (diff > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
  return r;
}

}  // namespace puca::train
