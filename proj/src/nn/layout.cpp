#include <algorithm>
#include <string>

#include "puca/nn.hpp"

namespace puca::nn {

Var channel_concat(const Var& a, const Var& b) {
  const Shape as = a.shape(), bs = b.shape();
  if (as.c == 0) return b;
  if (bs.c == 0) return a;
  if (as.n != bs.n || as.h != bs.h || as.w != bs.w) {
    throw ShapeError("channel_concat: batch/spatial mismatch " + as.str() + " vs " + bs.str());
  }
  const Shape os{as.n, as.c + bs.c, as.h, as.w};
  const std::size_t a_item = static_cast<std::size_t>(as.c) * as.plane();
  const std::size_t b_item = static_cast<std::size_t>(bs.c) * bs.plane();
  Tensor out(os);
  for (int n = 0; n < as.n; ++n) {
    std::copy_n(a.value().plane(n, 0), a_item, out.plane(n, 0));
    std::copy_n(b.value().plane(n, 0), b_item, out.plane(n, as.c));
  }
  return record(std::move(out), {a, b}, [as, bs, a_item, b_item](const Tensor& g, GradSink& sink) {
    if (sink.wants(0)) {
      Tensor ga(as);
      for (int n = 0; n < as.n; ++n) std::copy_n(g.plane(n, 0), a_item, ga.plane(n, 0));
      sink.add(0, std::move(ga));
    }
    if (sink.wants(1)) {
      Tensor gb(bs);
      for (int n = 0; n < bs.n; ++n) std::copy_n(g.plane(n, as.c), b_item, gb.plane(n, 0));
      sink.add(1, std::move(gb));
    }
  });
}

Var channel_slice(const Var& x, int begin, int end) {
  const Shape s = x.shape();
  if (begin < 0 || end > s.c || begin > end) {
    throw ShapeError("channel_slice: [" + std::to_string(begin) + "," + std::to_string(end) + ") out of range for " +
                     s.str());
  }
  const Shape os{s.n, end - begin, s.h, s.w};
  const std::size_t len = static_cast<std::size_t>(end - begin) * s.plane();
  Tensor out(os);
  for (int n = 0; n < s.n; ++n) std::copy_n(x.value().plane(n, begin), len, out.plane(n, 0));
  return record(std::move(out), {x}, [s, begin, len](const Tensor& g, GradSink& sink) {
    if (!sink.wants(0)) return;
    Tensor gx(s);
    for (int n = 0; n < s.n; ++n) std::copy_n(g.plane(n, 0), len, gx.plane(n, begin));
    sink.add(0, std::move(gx));
  });
}

namespace {

// Copies the top-left min(h)xmin(w) window between planes of different sizes.
void copy_window(const Tensor& src, Tensor& dst) {
  const Shape& a = src.shape();
  const Shape& b = dst.shape();
  const int h = std::min(a.h, b.h), w = std::min(a.w, b.w);
  for (int n = 0; n < a.n; ++n)
    for (int c = 0; c < a.c; ++c)
      for (int y = 0; y < h; ++y) std::copy_n(src.plane(n, c) + static_cast<std::size_t>(y) * a.w, w, dst.plane(n, c) + static_cast<std::size_t>(y) * b.w);
}

}  // namespace

Var pad_zero(const Var& x, int bottom, int right) {
  if (bottom < 0 || right < 0) throw ShapeError("pad_zero: negative padding");
  const Shape s = x.shape();
  if (bottom == 0 && right == 0) return x;
  Tensor out({s.n, s.c, s.h + bottom, s.w + right});
  copy_window(x.value(), out);
  return record(std::move(out), {x}, [s](const Tensor& g, GradSink& sink) {
    if (!sink.wants(0)) return;
    Tensor gx(s);
    copy_window(g, gx);
    sink.add(0, std::move(gx));
  });
}

Var crop(const Var& x, int h, int w) {
  const Shape s = x.shape();
  if (h < 0 || w < 0 || h > s.h || w > s.w) {
    throw ShapeError("crop: " + std::to_string(h) + "x" + std::to_string(w) + " exceeds " + s.str());
  }
  if (h == s.h && w == s.w) return x;
  Tensor out({s.n, s.c, h, w});
  copy_window(x.value(), out);
  return record(std::move(out), {x}, [s](const Tensor& g, GradSink& sink) {
    if (!sink.wants(0)) return;
    Tensor gx(s);
    copy_window(g, gx);
    sink.add(0, std::move(gx));
  });
}

}  // namespace puca::nn
