#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <vector>

#include "puca/train.hpp"

namespace puca::train {

double psnr(const Tensor& a, const Tensor& b, double peak) {
  require_same_shape(a.shape(), b.shape(), "psnr");
  if (a.empty()) throw ShapeError("psnr: empty images");
  // Summed in sorted order so the result does not depend on pixel order.
  std::vector<double> sq(a.size());
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double d = a.raw()[k] - b.raw()[k];
    sq[k] = d * d;
  }
  std::sort(sq.begin(), sq.end());
  double acc = 0.0;
  for (double v : sq) acc += v;
  const double mse = acc / static_cast<double>(a.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / mse);
}

namespace {

constexpr int kWin = 11;

std::array<double, kWin> gaussian_window() {
  std::array<double, kWin> g{};
  double total = 0.0;
  for (int i = 0; i < kWin; ++i) {
    const double x = i - kWin / 2;
    g[i] = std::exp(-x * x / (2.0 * 1.5 * 1.5));
    total += g[i];
  }
  for (double& v : g) v /= total;
  return g;
}

// Valid separable filtering of an h x w plane: rows first, then columns.
std::vector<double> filter_valid(const std::vector<double>& src, int h, int w, const std::array<double, kWin>& g) {
  const int ow = w - kWin + 1;
  const int oh = h - kWin + 1;
  std::vector<double> rows(static_cast<std::size_t>(h) * ow);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int k = 0; k < kWin; ++k) acc += g[k] * src[static_cast<std::size_t>(y) * w + x + k];
      rows[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  std::vector<double> out(static_cast<std::size_t>(oh) * ow);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int k = 0; k < kWin; ++k) acc += g[k] * rows[static_cast<std::size_t>(y + k) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  return out;
}

}  // namespace

double ssim(const Tensor& a, const Tensor& b) {
  require_same_shape(a.shape(), b.shape(), "ssim");
  const Shape& s = a.shape();
  if (s.h < kWin || s.w < kWin) {
    throw ShapeError("ssim: images must be at least 11x11, got " + s.str());
  }
  constexpr double c1 = 0.01 * 0.01;
  constexpr double c2 = 0.03 * 0.03;
  const auto g = gaussian_window();
  const std::size_t plane = s.plane();
  double total = 0.0;
  std::size_t count = 0;
  std::vector<double> pa(plane), pb(plane), aa(plane), bb(plane), ab(plane);
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const double* xa = a.plane(n, c);
      const double* xb = b.plane(n, c);
      for (std::size_t k = 0; k < plane; ++k) {
        pa[k] = xa[k];
        pb[k] = xb[k];
        aa[k] = xa[k] * xa[k];
        bb[k] = xb[k] * xb[k];
        ab[k] = xa[k] * xb[k];
      }
      const auto mu_a = filter_valid(pa, s.h, s.w, g);
      const auto mu_b = filter_valid(pb, s.h, s.w, g);
      const auto e_aa = filter_valid(aa, s.h, s.w, g);
      const auto e_bb = filter_valid(bb, s.h, s.w, g);
      const auto e_ab = filter_valid(ab, s.h, s.w, g);
      for (std::size_t k = 0; k < mu_a.size(); ++k) {
        const double mab = mu_a[k] * mu_b[k];
        const double var_a = e_aa[k] - mu_a[k] * mu_a[k];
        const double var_b = e_bb[k] - mu_b[k] * mu_b[k];
        const double cov = e_ab[k] - mab;
        const double num = (2.0 * mab + c1) * (2.0 * cov + c2);
        const double den = (mu_a[k] * mu_a[k] + mu_b[k] * mu_b[k] + c1) * (var_a + var_b + c2);
        total += num / den;
      }
      count += mu_a.size();
    }
  }
  return total / static_cast<double>(count);
}

}  // namespace puca::train
