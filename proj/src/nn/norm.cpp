#include <cmath>
#include <string>

#include "puca/nn.hpp"

namespace puca::nn {

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  const Shape s = x.shape();
  if (s.c == 0) throw ShapeError("layer_norm: input has zero channels");
  if (!(eps > 0.0)) throw std::invalid_argument("layer_norm: eps must be positive");
  const Shape ps{1, s.c, 1, 1};
  require_same_shape(gamma.shape(), ps, "layer_norm gamma");
  require_same_shape(beta.shape(), ps, "layer_norm beta");

  const std::size_t plane = s.plane();
  const double inv_c = 1.0 / s.c;
  auto xhat = std::make_shared<Tensor>(s);
  auto inv_std = std::make_shared<Tensor>(Shape{s.n, 1, s.h, s.w});
  Tensor out(s);
  const double* g = gamma.value().raw();
  const double* b = beta.value().raw();
  for (int n = 0; n < s.n; ++n) {
    for (std::size_t p = 0; p < plane; ++p) {
      double mu = 0.0;
      for (int c = 0; c < s.c; ++c) mu += x.value().plane(n, c)[p];
      mu *= inv_c;
      double var = 0.0;
      for (int c = 0; c < s.c; ++c) {
        const double d = x.value().plane(n, c)[p] - mu;
        var += d * d;
      }
      var *= inv_c;
      const double r = 1.0 / std::sqrt(var + eps);
      inv_std->plane(n, 0)[p] = r;
      for (int c = 0; c < s.c; ++c) {
        const double xh = (x.value().plane(n, c)[p] - mu) * r;
        xhat->plane(n, c)[p] = xh;
        out.plane(n, c)[p] = g[c] * xh + b[c];
      }
    }
  }

  auto gp = gamma.ptr();
  return record(std::move(out), {x, gamma, beta},
                [s, plane, inv_c, xhat, inv_std, gp](const Tensor& gy, GradSink& sink) {
                  if (sink.wants(0)) {
                    Tensor gx(s);
                    const double* g = gp->raw();
                    for (int n = 0; n < s.n; ++n) {
                      for (std::size_t p = 0; p < plane; ++p) {
                        double m1 = 0.0, m2 = 0.0;
                        for (int c = 0; c < s.c; ++c) {
                          const double dxh = gy.plane(n, c)[p] * g[c];
                          m1 += dxh;
                          m2 += dxh * xhat->plane(n, c)[p];
                        }
                        m1 *= inv_c;
                        m2 *= inv_c;
                        const double r = inv_std->plane(n, 0)[p];
                        for (int c = 0; c < s.c; ++c) {
                          const double dxh = gy.plane(n, c)[p] * g[c];
                          gx.plane(n, c)[p] = r * (dxh - m1 - xhat->plane(n, c)[p] * m2);
                        }
                      }
                    }
                    sink.add(0, std::move(gx));
                  }
                  if (sink.wants(1) || sink.wants(2)) {
                    Tensor gg({1, s.c, 1, 1}), gb({1, s.c, 1, 1});
                    for (int n = 0; n < s.n; ++n) {
                      for (int c = 0; c < s.c; ++c) {
                        const double* go = gy.plane(n, c);
                        const double* xh = xhat->plane(n, c);
                        double a = 0.0, bsum = 0.0;
                        for (std::size_t p = 0; p < plane; ++p) {
                          a += go[p] * xh[p];
                          bsum += go[p];
                        }
                        gg.raw()[c] += a;
                        gb.raw()[c] += bsum;
                      }
                    }
                    sink.add(1, std::move(gg));
                    sink.add(2, std::move(gb));
                  }
                });
}

Var simple_gate(const Var& x) {
  const Shape s = x.shape();
  if (s.c % 2 != 0) throw ShapeError("simple_gate: channel count " + std::to_string(s.c) + " is odd");
  const int half = s.c / 2;
  const std::size_t plane = s.plane();
  Tensor out({s.n, half, s.h, s.w});
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < half; ++c) {
      const double* a = x.value().plane(n, c);
      const double* b = x.value().plane(n, c + half);
      double* o = out.plane(n, c);
      for (std::size_t p = 0; p < plane; ++p) o[p] = a[p] * b[p];
    }
  }
  auto xp = x.ptr();
  return record(std::move(out), {x}, [xp, half, plane](const Tensor& gy, GradSink& sink) {
    if (!sink.wants(0)) return;
    const Shape& s = xp->shape();
    Tensor gx(s);
    for (int n = 0; n < s.n; ++n) {
      for (int c = 0; c < half; ++c) {
        const double* a = xp->plane(n, c);
        const double* b = xp->plane(n, c + half);
        const double* go = gy.plane(n, c);
        double* ga = gx.plane(n, c);
        double* gb = gx.plane(n, c + half);
        for (std::size_t p = 0; p < plane; ++p) {
          ga[p] = go[p] * b[p];
          gb[p] = go[p] * a[p];
        }
      }
    }
    sink.add(0, std::move(gx));
  });
}

}  // namespace puca::nn
