#include <memory>
#include <string>
#include <vector>

#include "puca/nn.hpp"

namespace puca::nn {

namespace {

using IndexMap = std::vector<std::size_t>;

// Moves element i of x to position dest[i] of a tensor with shape out_shape.
// The gradient gathers back through the same map.
Var permute(const Var& x, const Shape& out_shape, std::shared_ptr<const IndexMap> dest) {
  Tensor out(out_shape);
  const double* src = x.value().raw();
  double* dst = out.raw();
  const IndexMap& d = *dest;
  for (std::size_t i = 0; i < d.size(); ++i) dst[d[i]] = src[i];
  const Shape in_shape = x.shape();
  return record(std::move(out), {x}, [dest, in_shape](const Tensor& g, GradSink& sink) {
    if (!sink.wants(0)) return;
    Tensor gx(in_shape);
    const IndexMap& d = *dest;
    for (std::size_t i = 0; i < d.size(); ++i) gx.raw()[i] = g.raw()[d[i]];
    sink.add(0, std::move(gx));
  });
}

// Inverse of a permutation given as dest map.
std::shared_ptr<const IndexMap> invert(const IndexMap& d) {
  auto inv = std::make_shared<IndexMap>(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) (*inv)[d[i]] = i;
  return inv;
}

std::size_t flat(const Shape& s, int n, int c, int h, int w) {
  return ((static_cast<std::size_t>(n) * s.c + c) * s.h + h) * s.w + w;
}

void require_factor(int factor, const char* op) {
  if (factor < 1) throw ShapeError(std::string(op) + ": factor must be >= 1, got " + std::to_string(factor));
}

void require_spatial_multiple(const Shape& s, int m, const char* op, const std::string& what) {
  if (s.h % m != 0 || s.w % m != 0) {
    throw ShapeError(std::string(op) + ": spatial dims " + std::to_string(s.h) + "x" + std::to_string(s.w) +
                     " must be divisible by " + what + " = " + std::to_string(m));
  }
}

// Destination map of patch-unshuffle for an input of shape s.
IndexMap patch_unshuffle_map(const Shape& s, int p) {
  const int pp = p * p;
  const Shape o{s.n, s.c * pp, s.h / p, s.w / p};
  IndexMap d(s.numel());
  std::size_t i = 0;
  for (int n = 0; n < s.n; ++n) {
    for (int k = 0; k < s.c; ++k) {
      for (int y = 0; y < s.h; ++y) {
        const int oy = p * (y / pp) + y % p;
        const int py = (y % pp) / p;
        for (int x = 0; x < s.w; ++x, ++i) {
          const int ox = p * (x / pp) + x % p;
          const int px = (x % pp) / p;
          d[i] = flat(o, n, s.c * (p * py + px) + k, oy, ox);
        }
      }
    }
  }
  return d;
}

IndexMap pixel_unshuffle_map(const Shape& s, int q) {
  const Shape o{s.n, s.c * q * q, s.h / q, s.w / q};
  IndexMap d(s.numel());
  std::size_t i = 0;
  for (int n = 0; n < s.n; ++n)
    for (int k = 0; k < s.c; ++k)
      for (int y = 0; y < s.h; ++y)
        for (int x = 0; x < s.w; ++x, ++i) d[i] = flat(o, n, k * q * q + (y % q) * q + (x % q), y / q, x / q);
  return d;
}

IndexMap pd_down_map(const Shape& s, int st) {
  const Shape o{s.n * st * st, s.c, s.h / st, s.w / st};
  IndexMap d(s.numel());
  std::size_t i = 0;
  for (int n = 0; n < s.n; ++n)
    for (int k = 0; k < s.c; ++k)
      for (int y = 0; y < s.h; ++y)
        for (int x = 0; x < s.w; ++x, ++i)
          d[i] = flat(o, n * st * st + (y % st) * st + (x % st), k, y / st, x / st);
  return d;
}

}  // namespace

Var patch_unshuffle(const Var& x, int p) {
  require_factor(p, "patch_unshuffle");
  const Shape& s = x.shape();
  require_spatial_multiple(s, p * p, "patch_unshuffle", "p^2");
  return permute(x, {s.n, s.c * p * p, s.h / p, s.w / p},
                 std::make_shared<const IndexMap>(patch_unshuffle_map(s, p)));
}

Var patch_shuffle(const Var& x, int p) {
  require_factor(p, "patch_shuffle");
  const Shape& s = x.shape();
  if (s.c % (p * p) != 0) {
    throw ShapeError("patch_shuffle: channels " + std::to_string(s.c) + " not divisible by p^2 = " +
                     std::to_string(p * p));
  }
  const Shape o{s.n, s.c / (p * p), s.h * p, s.w * p};
  require_spatial_multiple(o, p * p, "patch_shuffle", "p^2");
  return permute(x, o, invert(patch_unshuffle_map(o, p)));
}

Var pixel_unshuffle(const Var& x, int q) {
  require_factor(q, "pixel_unshuffle");
  const Shape& s = x.shape();
  require_spatial_multiple(s, q, "pixel_unshuffle", "q");
  return permute(x, {s.n, s.c * q * q, s.h / q, s.w / q},
                 std::make_shared<const IndexMap>(pixel_unshuffle_map(s, q)));
}

Var pixel_shuffle(const Var& x, int q) {
  require_factor(q, "pixel_shuffle");
  const Shape& s = x.shape();
  if (s.c % (q * q) != 0) {
    throw ShapeError("pixel_shuffle: channels " + std::to_string(s.c) + " not divisible by q^2 = " +
                     std::to_string(q * q));
  }
  const Shape o{s.n, s.c / (q * q), s.h * q, s.w * q};
  return permute(x, o, invert(pixel_unshuffle_map(o, q)));
}

Var pd_down(const Var& x, int s) {
  require_factor(s, "pd_down");
  const Shape& xs = x.shape();
  require_spatial_multiple(xs, s, "pd_down", "stride");
  return permute(x, {xs.n * s * s, xs.c, xs.h / s, xs.w / s}, std::make_shared<const IndexMap>(pd_down_map(xs, s)));
}

Var pd_up(const Var& y, int s) {
  require_factor(s, "pd_up");
  const Shape& ys = y.shape();
  if (ys.n % (s * s) != 0) {
    throw ShapeError("pd_up: batch " + std::to_string(ys.n) + " not divisible by s^2 = " + std::to_string(s * s));
  }
  const Shape o{ys.n / (s * s), ys.c, ys.h * s, ys.w * s};
  return permute(y, o, invert(pd_down_map(o, s)));
}

}  // namespace puca::nn
