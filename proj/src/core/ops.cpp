#include "puca/ops.hpp"

#include <algorithm>
#include <array>

namespace puca {

namespace {

enum class Broadcast { kSame, kScalar, kChannel };

Broadcast classify(const Shape& a, const Shape& b, const char* op) {
  if (a == b) return Broadcast::kSame;
  if (b == Shape{1, 1, 1, 1}) return Broadcast::kScalar;
  if (b.n == 1 && b.c == a.c && b.h == 1 && b.w == 1) return Broadcast::kChannel;
  throw ShapeError(std::string(op) + ": cannot combine " + a.str() + " with " + b.str() +
                   " (only equal, scalar or per-channel (1,c,1,1) operands are supported)");
}

// Value of b aligned with flat index i of a.
template <typename F>
void for_each_pair(const Shape& as, Broadcast kind, F&& f) {
  const std::size_t plane = as.plane();
  std::size_t i = 0;
  for (int n = 0; n < as.n; ++n) {
    for (int c = 0; c < as.c; ++c) {
      for (std::size_t p = 0; p < plane; ++p, ++i) {
        std::size_t j = 0;
        switch (kind) {
          case Broadcast::kSame: j = i; break;
          case Broadcast::kScalar: j = 0; break;
          case Broadcast::kChannel: j = static_cast<std::size_t>(c); break;
        }
        f(i, j);
      }
    }
  }
}

// Reduces a full-size gradient down to b's broadcast shape.
Tensor unbroadcast(const Tensor& g, const Shape& bs, Broadcast kind) {
  if (kind == Broadcast::kSame) return g;
  Tensor out(bs);
  for_each_pair(g.shape(), kind, [&](std::size_t i, std::size_t j) { out.raw()[j] += g.raw()[i]; });
  return out;
}

enum class Arith { kAdd, kSub, kMul };

Var binary(const Var& a, const Var& b, Arith op, const char* name) {
  const Broadcast kind = classify(a.shape(), b.shape(), name);
  Tensor out(a.shape());
  const double* av = a.value().raw();
  const double* bv = b.value().raw();
  double* ov = out.raw();
  switch (op) {
    case Arith::kAdd: for_each_pair(a.shape(), kind, [&](auto i, auto j) { ov[i] = av[i] + bv[j]; }); break;
    case Arith::kSub: for_each_pair(a.shape(), kind, [&](auto i, auto j) { ov[i] = av[i] - bv[j]; }); break;
    case Arith::kMul: for_each_pair(a.shape(), kind, [&](auto i, auto j) { ov[i] = av[i] * bv[j]; }); break;
  }
  auto ap = a.ptr();
  auto bp = b.ptr();
  return record(std::move(out), {a, b}, [ap, bp, kind, op](const Tensor& g, GradSink& sink) {
    const Shape& as = ap->shape();
    if (op == Arith::kMul) {
      if (sink.wants(0)) {
        Tensor ga(as);
        for_each_pair(as, kind, [&](auto i, auto j) { ga.raw()[i] = g.raw()[i] * bp->raw()[j]; });
        sink.add(0, std::move(ga));
      }
      if (sink.wants(1)) {
        Tensor gb(bp->shape());
        if (kind == Broadcast::kSame) {
          for_each_pair(as, kind, [&](auto i, auto) { gb.raw()[i] = g.raw()[i] * ap->raw()[i]; });
        } else {
          for_each_pair(as, kind, [&](auto i, auto j) { gb.raw()[j] += g.raw()[i] * ap->raw()[i]; });
        }
        sink.add(1, std::move(gb));
      }
      return;
    }
    sink.add(0, g);
    if (sink.wants(1)) {
      Tensor gb = unbroadcast(g, bp->shape(), kind);
      if (op == Arith::kSub) gb *= -1.0;
      sink.add(1, std::move(gb));
    }
  });
}

std::array<bool, 4> axis_mask(const std::vector<int>& axes) {
  std::array<bool, 4> mask{};
  for (int ax : axes) {
    if (ax < 0 || ax > 3) throw ShapeError("reduce: invalid axis " + std::to_string(ax));
    mask[static_cast<std::size_t>(ax)] = true;
  }
  return mask;
}

Shape reduced_shape(const Shape& s, const std::array<bool, 4>& m) {
  return {m[0] ? 1 : s.n, m[1] ? 1 : s.c, m[2] ? 1 : s.h, m[3] ? 1 : s.w};
}

// Calls f(full_index, reduced_index) for every element.
template <typename F>
void for_each_reduced(const Shape& s, const Shape& r, F&& f) {
  std::size_t i = 0;
  for (int n = 0; n < s.n; ++n) {
    const int rn = r.n == 1 ? 0 : n;
    for (int c = 0; c < s.c; ++c) {
      const int rc = r.c == 1 ? 0 : c;
      for (int h = 0; h < s.h; ++h) {
        const int rh = r.h == 1 ? 0 : h;
        const std::size_t base = ((static_cast<std::size_t>(rn) * r.c + rc) * r.h + rh) * r.w;
        for (int w = 0; w < s.w; ++w, ++i) f(i, base + (r.w == 1 ? 0 : static_cast<std::size_t>(w)));
      }
    }
  }
}

Var reduce(const Var& a, const std::vector<int>& axes, bool average) {
  const auto mask = axis_mask(axes);
  const Shape& s = a.shape();
  const Shape r = reduced_shape(s, mask);
  Tensor out(r);
  for_each_reduced(s, r, [&](std::size_t i, std::size_t j) { out.raw()[j] += a.value().raw()[i]; });
  const std::size_t count = r.numel() == 0 ? 0 : s.numel() / r.numel();
  const double scale = (average && count > 0) ? 1.0 / static_cast<double>(count) : 1.0;
  if (average) out *= scale;
  return record(std::move(out), {a}, [s, r, scale](const Tensor& g, GradSink& sink) {
    if (!sink.wants(0)) return;
    Tensor ga(s);
    for_each_reduced(s, r, [&](std::size_t i, std::size_t j) { ga.raw()[i] = g.raw()[j] * scale; });
    sink.add(0, std::move(ga));
  });
}

}  // namespace

Var add(const Var& a, const Var& b) { return binary(a, b, Arith::kAdd, "add"); }
Var sub(const Var& a, const Var& b) { return binary(a, b, Arith::kSub, "sub"); }
Var mul(const Var& a, const Var& b) { return binary(a, b, Arith::kMul, "mul"); }

Var add_scalar(const Var& a, double s) {
  Tensor out = a.value();
  for (double& v : out.data()) v += s;
  return record(std::move(out), {a}, [](const Tensor& g, GradSink& sink) { sink.add(0, g); });
}

Var mul_scalar(const Var& a, double s) {
  Tensor out = a.value();
  out *= s;
  return record(std::move(out), {a}, [s](const Tensor& g, GradSink& sink) {
    if (!sink.wants(0)) return;
    Tensor ga = g;
    ga *= s;
    sink.add(0, std::move(ga));
  });
}

Var reduce_sum(const Var& a, const std::vector<int>& axes) { return reduce(a, axes, false); }
Var reduce_mean(const Var& a, const std::vector<int>& axes) { return reduce(a, axes, true); }
Var sum(const Var& a) { return reduce(a, {0, 1, 2, 3}, false); }
Var mean(const Var& a) { return reduce(a, {0, 1, 2, 3}, true); }

Var pixel_sum(const Var& a, int n, int i, int j) {
  const Shape& s = a.shape();
  if (n < 0 || n >= s.n || i < 0 || i >= s.h || j < 0 || j >= s.w) {
    throw ShapeError("pixel_sum: target (" + std::to_string(n) + "," + std::to_string(i) + "," + std::to_string(j) +
                     ") out of bounds for " + s.str());
  }
  double acc = 0.0;
  for (int c = 0; c < s.c; ++c) acc += a.value().at(n, c, i, j);
  return record(Tensor({1, 1, 1, 1}, acc), {a}, [s, n, i, j](const Tensor& g, GradSink& sink) {
    if (!sink.wants(0)) return;
    Tensor ga(s);
    for (int c = 0; c < s.c; ++c) ga.at(n, c, i, j) = g.item();
    sink.add(0, std::move(ga));
  });
}

Var weighted_sum(const Var& a, const Tensor& weights) {
  require_same_shape(a.shape(), weights.shape(), "weighted_sum");
  double acc = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) acc += a.value().raw()[i] * weights.raw()[i];
  auto wp = std::make_shared<const Tensor>(weights);
  return record(Tensor({1, 1, 1, 1}, acc), {a}, [wp](const Tensor& g, GradSink& sink) {
    if (!sink.wants(0)) return;
    Tensor ga = *wp;
    ga *= g.item();
    sink.add(0, std::move(ga));
  });
}

}  // namespace puca
