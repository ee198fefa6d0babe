#include <cblas.h>

#include <algorithm>
#include <mutex>
#include <string>
#include <vector>

#include "puca/nn.hpp"

namespace puca::nn {

namespace {

// out(y, x) += w * in(y + dy, x + dx) over the region where both are in bounds.
inline void axpy_shifted(double* __restrict out, const double* __restrict in, double w, int h, int wd, int dy,
                         int dx) {
  if (dy == 0 && dx == 0) {
    const int n = h * wd;
    for (int i = 0; i < n; ++i) out[i] += w * in[i];
    return;
  }
  const int y0 = std::max(0, -dy), y1 = std::min(h, h - dy);
  const int x0 = std::max(0, -dx), x1 = std::min(wd, wd - dx);
  for (int y = y0; y < y1; ++y) {
    double* o = out + static_cast<std::ptrdiff_t>(y) * wd;
    const double* s = in + static_cast<std::ptrdiff_t>(y + dy) * wd + dx;
    for (int x = x0; x < x1; ++x) o[x] += w * s[x];
  }
}

// sum over (y, x) of a(y, x) * b(y + dy, x + dx).
inline double dot_shifted(const double* __restrict a, const double* __restrict b, int h, int wd, int dy, int dx) {
  double acc = 0.0;
  if (dy == 0 && dx == 0) {
    const int n = h * wd;
    for (int i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
  }
  const int y0 = std::max(0, -dy), y1 = std::min(h, h - dy);
  const int x0 = std::max(0, -dx), x1 = std::min(wd, wd - dx);
  for (int y = y0; y < y1; ++y) {
    const double* ar = a + static_cast<std::ptrdiff_t>(y) * wd;
    const double* br = b + static_cast<std::ptrdiff_t>(y + dy) * wd + dx;
    for (int x = x0; x < x1; ++x) acc += ar[x] * br[x];
  }
  return acc;
}

struct Geometry {
  int n, h, w, cin_g, cout_g, groups, k, dil;
  bool masked;
  int offset(int kk) const { return (kk - k / 2) * dil; }
  bool skip(int ky, int kx) const { return masked && ky == k / 2 && kx == k / 2; }
};

Tensor conv_forward(const Tensor& x, const Tensor& wt, const Tensor* bias, const ConvSpec& spec, const Geometry& g) {
  Tensor out({g.n, spec.out_channels, g.h, g.w});
  const std::size_t plane = static_cast<std::size_t>(g.h) * g.w;
  for (int n = 0; n < g.n; ++n) {
    for (int oc = 0; oc < spec.out_channels; ++oc) {
      double* o = out.plane(n, oc);
      if (bias) std::fill(o, o + plane, bias->raw()[oc]);
      const int grp = oc / g.cout_g;
      for (int icl = 0; icl < g.cin_g; ++icl) {
        const double* in = x.plane(n, grp * g.cin_g + icl);
        for (int ky = 0; ky < g.k; ++ky) {
          for (int kx = 0; kx < g.k; ++kx) {
            if (g.skip(ky, kx)) continue;
            const double wv = wt.at(oc, icl, ky, kx);
            axpy_shifted(o, in, wv, g.h, g.w, g.offset(ky), g.offset(kx));
          }
        }
      }
    }
  }
  return out;
}

// ---- dense path: im2col + dgemm ---------------------------------------------

void single_threaded_blas() {
  // Results must not depend on how the library splits work across threads.
  static std::once_flag once;
  std::call_once(once, [] { openblas_set_num_threads(1); });
}

struct Tap {
  int ky, kx;
};

std::vector<Tap> live_taps(const Geometry& g) {
  std::vector<Tap> taps;
  for (int ky = 0; ky < g.k; ++ky)
    for (int kx = 0; kx < g.k; ++kx)
      if (!g.skip(ky, kx)) taps.push_back({ky, kx});
  return taps;
}

bool pointwise(const Geometry& g) { return g.k == 1 && !g.masked; }

// Weight as a row-major (cout) x (cin * taps) matrix.
std::vector<double> weight_matrix(const Tensor& wt, const Geometry& g, const std::vector<Tap>& taps) {
  const int cout = g.cout_g, cin = g.cin_g, t = static_cast<int>(taps.size());
  std::vector<double> m(static_cast<std::size_t>(cout) * cin * t);
  for (int oc = 0; oc < cout; ++oc)
    for (int ic = 0; ic < cin; ++ic)
      for (int k = 0; k < t; ++k) m[(static_cast<std::size_t>(oc) * cin + ic) * t + k] = wt.at(oc, ic, taps[k].ky, taps[k].kx);
  return m;
}

// Column matrix (cin * taps) x (h * w) of batch item n; out-of-image taps read 0.
void im2col(const Tensor& x, int n, const Geometry& g, const std::vector<Tap>& taps, std::vector<double>& col) {
  const int t = static_cast<int>(taps.size());
  const std::size_t plane = static_cast<std::size_t>(g.h) * g.w;
  col.assign(static_cast<std::size_t>(g.cin_g) * t * plane, 0.0);
  for (int ic = 0; ic < g.cin_g; ++ic) {
    const double* in = x.plane(n, ic);
    for (int k = 0; k < t; ++k) {
      double* row = col.data() + (static_cast<std::size_t>(ic) * t + k) * plane;
      const int dy = g.offset(taps[k].ky), dx = g.offset(taps[k].kx);
      const int y0 = std::max(0, -dy), y1 = std::min(g.h, g.h - dy);
      const int x0 = std::max(0, -dx), x1 = std::min(g.w, g.w - dx);
      for (int y = y0; y < y1; ++y) {
        const double* s = in + static_cast<std::ptrdiff_t>(y + dy) * g.w + dx;
        std::copy(s + x0, s + x1, row + static_cast<std::ptrdiff_t>(y) * g.w + x0);
      }
    }
  }
}

// Adds a column-matrix gradient back into the image gradient of batch item n.
void col2im(const std::vector<double>& col, int n, const Geometry& g, const std::vector<Tap>& taps, Tensor& gx) {
  const int t = static_cast<int>(taps.size());
  const std::size_t plane = static_cast<std::size_t>(g.h) * g.w;
  for (int ic = 0; ic < g.cin_g; ++ic) {
    double* out = gx.plane(n, ic);
    for (int k = 0; k < t; ++k) {
      const double* row = col.data() + (static_cast<std::size_t>(ic) * t + k) * plane;
      const int dy = g.offset(taps[k].ky), dx = g.offset(taps[k].kx);
      const int y0 = std::max(0, -dy), y1 = std::min(g.h, g.h - dy);
      const int x0 = std::max(0, -dx), x1 = std::min(g.w, g.w - dx);
      for (int y = y0; y < y1; ++y) {
        double* d = out + static_cast<std::ptrdiff_t>(y + dy) * g.w + dx;
        const double* s = row + static_cast<std::ptrdiff_t>(y) * g.w;
        for (int xx = x0; xx < x1; ++xx) d[xx] += s[xx];
      }
    }
  }
}

Tensor dense_forward(const Tensor& x, const Tensor& wt, const Tensor* bias, const ConvSpec& spec, const Geometry& g) {
  single_threaded_blas();
  Tensor out({g.n, spec.out_channels, g.h, g.w});
  const int plane = g.h * g.w;
  const auto taps = live_taps(g);
  const int kdim = g.cin_g * static_cast<int>(taps.size());
  const bool direct = pointwise(g);
  const std::vector<double> wm = direct ? std::vector<double>() : weight_matrix(wt, g, taps);
  const double* a = direct ? wt.raw() : wm.data();
  std::vector<double> col;
  for (int n = 0; n < g.n; ++n) {
    double* o = out.plane(n, 0);
    double beta = 0.0;
    if (bias) {
      for (int oc = 0; oc < spec.out_channels; ++oc) std::fill(o + static_cast<std::ptrdiff_t>(oc) * plane, o + static_cast<std::ptrdiff_t>(oc + 1) * plane, bias->raw()[oc]);
      beta = 1.0;
    }
    const double* b = x.plane(n, 0);
    if (!direct) {
      im2col(x, n, g, taps, col);
      b = col.data();
    }
    cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, spec.out_channels, plane, kdim, 1.0, a, kdim, b, plane, beta,
                o, plane);
  }
  return out;
}

void dense_backward(const Tensor& gy, const Tensor& x, const Tensor& wt, const Geometry& g, Tensor* gx, Tensor* gw) {
  single_threaded_blas();
  const int plane = g.h * g.w;
  const int cout = g.cout_g;
  const auto taps = live_taps(g);
  const int t = static_cast<int>(taps.size());
  const int kdim = g.cin_g * t;
  const bool direct = pointwise(g);
  const std::vector<double> wm = direct ? std::vector<double>() : weight_matrix(wt, g, taps);
  const double* a = direct ? wt.raw() : wm.data();
  std::vector<double> gwm(static_cast<std::size_t>(cout) * kdim, 0.0);
  std::vector<double> col, gcol;
  for (int n = 0; n < g.n; ++n) {
    const double* go = gy.plane(n, 0);
    if (gx) {
      if (direct) {
        cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, kdim, plane, cout, 1.0, a, kdim, go, plane, 0.0,
                    gx->plane(n, 0), plane);
      } else {
        gcol.assign(static_cast<std::size_t>(kdim) * plane, 0.0);
        cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, kdim, plane, cout, 1.0, a, kdim, go, plane, 0.0,
                    gcol.data(), plane);
        col2im(gcol, n, g, taps, *gx);
      }
    }
    if (gw) {
      const double* b = x.plane(n, 0);
      if (!direct) {
        im2col(x, n, g, taps, col);
        b = col.data();
      }
      cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, cout, kdim, plane, 1.0, go, plane, b, plane, 1.0,
                  gwm.data(), kdim);
    }
  }
  if (gw) {
    for (int oc = 0; oc < cout; ++oc)
      for (int ic = 0; ic < g.cin_g; ++ic)
        for (int k = 0; k < t; ++k) gw->at(oc, ic, taps[k].ky, taps[k].kx) = gwm[(static_cast<std::size_t>(oc) * g.cin_g + ic) * t + k];
  }
}

}  // namespace

void ConvSpec::validate() const {
  if (in_channels <= 0 || out_channels <= 0) throw ShapeError("conv2d: channel counts must be positive");
  if (kernel <= 0 || kernel % 2 == 0) throw ShapeError("conv2d: kernel must be odd and positive, got " + std::to_string(kernel));
  if (dilation <= 0) throw ShapeError("conv2d: dilation must be positive");
  if (groups <= 0 || in_channels % groups != 0 || out_channels % groups != 0) {
    throw ShapeError("conv2d: groups " + std::to_string(groups) + " must divide in_channels " +
                     std::to_string(in_channels) + " and out_channels " + std::to_string(out_channels));
  }
}

Var conv2d(const Var& x, const Var& weight, const std::optional<Var>& bias, const ConvSpec& spec) {
  spec.validate();
  const Shape& xs = x.shape();
  if (xs.c != spec.in_channels) {
    throw ShapeError("conv2d: input " + xs.str() + " has " + std::to_string(xs.c) + " channels, expected " +
                     std::to_string(spec.in_channels));
  }
  require_same_shape(weight.shape(), spec.weight_shape(), "conv2d weight");
  if (bias) require_same_shape(bias->shape(), spec.bias_shape(), "conv2d bias");

  const Geometry g{xs.n, xs.h, xs.w, spec.in_channels / spec.groups, spec.out_channels / spec.groups,
                   spec.groups, spec.kernel, spec.dilation, spec.center_masked};
  const Tensor* bias_t = bias ? &bias->value() : nullptr;
  Tensor out = g.groups == 1 ? dense_forward(x.value(), weight.value(), bias_t, spec, g)
                             : conv_forward(x.value(), weight.value(), bias_t, spec, g);

  auto xp = x.ptr();
  auto wp = weight.ptr();
  const Var bias_var = bias ? *bias : Var();
  const bool has_bias = bias.has_value();
  auto fn = [xp, wp, spec, g, has_bias](const Tensor& gy, GradSink& sink) {
    const std::size_t plane = static_cast<std::size_t>(g.h) * g.w;
    if (g.groups == 1 && (sink.wants(0) || sink.wants(1))) {
      Tensor gx = sink.wants(0) ? Tensor(xp->shape()) : Tensor();
      Tensor gw = sink.wants(1) ? Tensor(wp->shape()) : Tensor();
      dense_backward(gy, *xp, *wp, g, sink.wants(0) ? &gx : nullptr, sink.wants(1) ? &gw : nullptr);
      if (sink.wants(0)) sink.add(0, std::move(gx));
      if (sink.wants(1)) sink.add(1, std::move(gw));
    } else if (sink.wants(0)) {
      Tensor gx(xp->shape());
      for (int n = 0; n < g.n; ++n) {
        for (int oc = 0; oc < spec.out_channels; ++oc) {
          const double* go = gy.plane(n, oc);
          const int grp = oc / g.cout_g;
          for (int icl = 0; icl < g.cin_g; ++icl) {
            double* gi = gx.plane(n, grp * g.cin_g + icl);
            for (int ky = 0; ky < g.k; ++ky) {
              for (int kx = 0; kx < g.k; ++kx) {
                if (g.skip(ky, kx)) continue;
                axpy_shifted(gi, go, wp->at(oc, icl, ky, kx), g.h, g.w, -g.offset(ky), -g.offset(kx));
              }
            }
          }
        }
      }
      sink.add(0, std::move(gx));
    }
    if (g.groups != 1 && sink.wants(1)) {
      Tensor gw(wp->shape());
      for (int n = 0; n < g.n; ++n) {
        for (int oc = 0; oc < spec.out_channels; ++oc) {
          const double* go = gy.plane(n, oc);
          const int grp = oc / g.cout_g;
          for (int icl = 0; icl < g.cin_g; ++icl) {
            const double* in = xp->plane(n, grp * g.cin_g + icl);
            for (int ky = 0; ky < g.k; ++ky) {
              for (int kx = 0; kx < g.k; ++kx) {
                if (g.skip(ky, kx)) continue;
                gw.at(oc, icl, ky, kx) += dot_shifted(go, in, g.h, g.w, g.offset(ky), g.offset(kx));
              }
            }
          }
        }
      }
      sink.add(1, std::move(gw));
    }
    if (has_bias && sink.wants(2)) {
      Tensor gb({1, spec.out_channels, 1, 1});
      for (int n = 0; n < g.n; ++n) {
        for (int oc = 0; oc < spec.out_channels; ++oc) {
          const double* go = gy.plane(n, oc);
          double acc = 0.0;
          for (std::size_t i = 0; i < plane; ++i) acc += go[i];
          gb.raw()[oc] += acc;
        }
      }
      sink.add(2, std::move(gb));
    }
  };
  if (has_bias) return record(std::move(out), {x, weight, bias_var}, std::move(fn));
  return record(std::move(out), {x, weight}, std::move(fn));
}

}  // namespace puca::nn
