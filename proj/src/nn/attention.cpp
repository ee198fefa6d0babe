#include <string>
#include <vector>

#include "puca/nn.hpp"

namespace puca::nn {

namespace {

struct PhaseLayout {
  int period;
  int phases;
  std::vector<int> phase_of;     // per spatial position
  std::vector<double> inv_count;  // per phase, 0 for empty classes

  PhaseLayout(int h, int w, int p) : period(p), phases(p * p), phase_of(static_cast<std::size_t>(h) * w) {
    std::vector<int> count(static_cast<std::size_t>(phases), 0);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const int ph = (y % p) * p + (x % p);
        phase_of[static_cast<std::size_t>(y) * w + x] = ph;
        ++count[static_cast<std::size_t>(ph)];
      }
    }
    inv_count.resize(count.size());
    for (std::size_t i = 0; i < count.size(); ++i) inv_count[i] = count[i] ? 1.0 / count[i] : 0.0;
  }
};

}  // namespace

Var sca(const Var& x, const Var& fc_weight, const Var& fc_bias, const ScaOptions& opts) {
  const Shape s = x.shape();
  if (opts.period < 1) throw ShapeError("sca: pooling period must be >= 1");
  require_same_shape(fc_weight.shape(), Shape{s.c, s.c, 1, 1}, "sca fc weight");
  require_same_shape(fc_bias.shape(), Shape{1, s.c, 1, 1}, "sca fc bias");

  auto layout = std::make_shared<const PhaseLayout>(s.h, s.w, opts.period);
  const int phases = layout->phases;
  const std::size_t plane = s.plane();

  // pooled(n, c, ph) and scale(n, c, ph) are stored as (n, c, 1, phases).
  auto pooled = std::make_shared<Tensor>(Shape{s.n, s.c, 1, phases});
  auto scale = std::make_shared<Tensor>(Shape{s.n, s.c, 1, phases});
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const double* in = x.value().plane(n, c);
      double* pl = pooled->plane(n, c);
      for (std::size_t p = 0; p < plane; ++p) pl[layout->phase_of[p]] += in[p];
      for (int ph = 0; ph < phases; ++ph) pl[ph] *= layout->inv_count[static_cast<std::size_t>(ph)];
    }
  }
  const double* wv = fc_weight.value().raw();
  const double* bv = fc_bias.value().raw();
  for (int n = 0; n < s.n; ++n) {
    for (int oc = 0; oc < s.c; ++oc) {
      double* sc = scale->plane(n, oc);
      for (int ph = 0; ph < phases; ++ph) sc[ph] = bv[oc];
      for (int ic = 0; ic < s.c; ++ic) {
        const double w = wv[static_cast<std::size_t>(oc) * s.c + ic];
        const double* pl = pooled->plane(n, ic);
        for (int ph = 0; ph < phases; ++ph) sc[ph] += w * pl[ph];
      }
    }
  }
  Tensor out(s);
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const double* in = x.value().plane(n, c);
      const double* sc = scale->plane(n, c);
      double* o = out.plane(n, c);
      for (std::size_t p = 0; p < plane; ++p) o[p] = in[p] * sc[layout->phase_of[p]];
    }
  }

  auto xp = x.ptr();
  auto wp = fc_weight.ptr();
  const bool hold = opts.hold_pool;
  return record(std::move(out), {x, fc_weight, fc_bias},
                [s, plane, phases, layout, pooled, scale, xp, wp, hold](const Tensor& gy, GradSink& sink) {
                  // d loss / d scale(n, c, ph)
                  Tensor gscale({s.n, s.c, 1, phases});
                  for (int n = 0; n < s.n; ++n) {
                    for (int c = 0; c < s.c; ++c) {
                      const double* go = gy.plane(n, c);
                      const double* in = xp->plane(n, c);
                      double* gs = gscale.plane(n, c);
                      for (std::size_t p = 0; p < plane; ++p) gs[layout->phase_of[p]] += go[p] * in[p];
                    }
                  }
                  if (sink.wants(0)) {
                    Tensor gx(s);
                    for (int n = 0; n < s.n; ++n) {
                      for (int c = 0; c < s.c; ++c) {
                        const double* go = gy.plane(n, c);
                        const double* sc = scale->plane(n, c);
                        double* gi = gx.plane(n, c);
                        for (std::size_t p = 0; p < plane; ++p) gi[p] = go[p] * sc[layout->phase_of[p]];
                      }
                    }
                    if (!hold) {
                      const double* w = wp->raw();
                      for (int n = 0; n < s.n; ++n) {
                        for (int ic = 0; ic < s.c; ++ic) {
                          std::vector<double> gpool(static_cast<std::size_t>(phases), 0.0);
                          for (int oc = 0; oc < s.c; ++oc) {
                            const double wv = w[static_cast<std::size_t>(oc) * s.c + ic];
                            const double* gs = gscale.plane(n, oc);
                            for (int ph = 0; ph < phases; ++ph) gpool[static_cast<std::size_t>(ph)] += wv * gs[ph];
                          }
                          for (int ph = 0; ph < phases; ++ph) {
                            gpool[static_cast<std::size_t>(ph)] *= layout->inv_count[static_cast<std::size_t>(ph)];
                          }
                          double* gi = gx.plane(n, ic);
                          for (std::size_t p = 0; p < plane; ++p) gi[p] += gpool[static_cast<std::size_t>(layout->phase_of[p])];
                        }
                      }
                    }
                    sink.add(0, std::move(gx));
                  }
                  if (sink.wants(1)) {
                    Tensor gw({s.c, s.c, 1, 1});
                    for (int n = 0; n < s.n; ++n) {
                      for (int oc = 0; oc < s.c; ++oc) {
                        const double* gs = gscale.plane(n, oc);
                        for (int ic = 0; ic < s.c; ++ic) {
                          const double* pl = pooled->plane(n, ic);
                          double acc = 0.0;
                          for (int ph = 0; ph < phases; ++ph) acc += gs[ph] * pl[ph];
                          gw.raw()[static_cast<std::size_t>(oc) * s.c + ic] += acc;
                        }
                      }
                    }
                    sink.add(1, std::move(gw));
                  }
                  if (sink.wants(2)) {
                    Tensor gb({1, s.c, 1, 1});
                    for (int n = 0; n < s.n; ++n) {
                      for (int c = 0; c < s.c; ++c) {
                        const double* gs = gscale.plane(n, c);
                        for (int ph = 0; ph < phases; ++ph) gb.raw()[c] += gs[ph];
                      }
                    }
                    sink.add(2, std::move(gb));
                  }
                });
}

}  // namespace puca::nn
