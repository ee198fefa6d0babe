#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "puca/jinv.hpp"
#include "puca/ops.hpp"

namespace puca::jinv {

int DependencyMap::support(double threshold) const {
  return static_cast<int>(std::count_if(values.begin(), values.end(), [&](double v) { return v > threshold; }));
}

namespace {

void require_batch1(const Tensor& x, const char* op) {
  if (x.shape().n != 1) throw ShapeError(std::string(op) + ": expected batch 1, got " + x.shape().str());
}

void require_target(const Shape& s, int ti, int tj, const char* op) {
  if (ti < 0 || ti >= s.h || tj < 0 || tj >= s.w) {
    throw ShapeError(std::string(op) + ": target (" + std::to_string(ti) + "," + std::to_string(tj) +
                     ") out of bounds for " + s.str());
  }
}

struct Probe {
  int c, i, j;
  double delta;
};

// Evaluates f on x with each probe applied, in chunks stacked on the batch
// axis. Returns, per probe, max over output channels of
// |f(x')[0, :, oi, oj] - base[0, :, oi, oj]| where (oi, oj) comes from target().
template <typename TargetFn>
std::vector<double> probe_outputs(const ImageFn& f, const Tensor& x, const Tensor& base, const std::vector<Probe>& probes,
                                  int chunk, TargetFn&& target) {
  std::vector<double> result(probes.size(), 0.0);
  chunk = std::max(chunk, 1);
  for (std::size_t start = 0; start < probes.size(); start += static_cast<std::size_t>(chunk)) {
    const std::size_t end = std::min(probes.size(), start + static_cast<std::size_t>(chunk));
    std::vector<Tensor> batch;
    batch.reserve(end - start);
    for (std::size_t k = start; k < end; ++k) {
      Tensor xp = x;
      xp.at(0, probes[k].c, probes[k].i, probes[k].j) += probes[k].delta;
      batch.push_back(std::move(xp));
    }
    const Tensor y = f(stack_batch(batch));
    if (y.shape().n != static_cast<int>(end - start)) {
      throw ShapeError("perturbation: function changed the batch size");
    }
    for (std::size_t k = start; k < end; ++k) {
      const auto [oi, oj] = target(probes[k]);
      double m = 0.0;
      for (int c = 0; c < y.shape().c; ++c) {
        const double diff = std::abs(y.at(static_cast<int>(k - start), c, oi, oj) - base.at(0, c, oi, oj));
        // NaN must never read as "no dependency".
        m = std::isnan(diff) ? std::numeric_limits<double>::infinity() : std::max(m, diff);
      }
      result[k] = m;
    }
  }
  return result;
}

}  // namespace

DependencyMap dependency_map_grad(const VarImageFn& f, const Tensor& x, int ti, int tj) {
  require_batch1(x, "dependency_map_grad");
  require_target(x.shape(), ti, tj, "dependency_map_grad");
  Tape tape;
  const Var input = tape.leaf(x);
  const Var y = f(input);
  require_target(y.shape(), ti, tj, "dependency_map_grad");
  const Var seed = pixel_sum(y, 0, ti, tj);
  DependencyMap map{ti, tj, x.shape().h, x.shape().w, {}, Method::kGradient};
  map.values.assign(x.shape().plane(), 0.0);
  if (!seed.tracked()) return map;
  const Gradients grads = tape.backward(seed);
  if (!grads.has(input)) return map;
  const Tensor& g = grads.of(input);
  for (int c = 0; c < x.shape().c; ++c) {
    const double* gp = g.plane(0, c);
    for (std::size_t p = 0; p < map.values.size(); ++p) map.values[p] += std::abs(gp[p]);
  }
  return map;
}

DependencyMap dependency_map_perturb(const ImageFn& f, const Tensor& x, int ti, int tj, double delta, int chunk) {
  if (!(delta > 0.0)) throw std::invalid_argument("dependency_map_perturb: delta must be positive");
  require_batch1(x, "dependency_map_perturb");
  require_target(x.shape(), ti, tj, "dependency_map_perturb");
  const Tensor base = f(x);
  const Shape& s = x.shape();
  std::vector<Probe> probes;
  for (int i = 0; i < s.h; ++i)
    for (int j = 0; j < s.w; ++j)
      for (int c = 0; c < s.c; ++c)
        for (double sign : {1.0, -1.0}) probes.push_back({c, i, j, sign * delta});
  const auto out = probe_outputs(f, x, base, probes, chunk, [&](const Probe&) { return std::pair{ti, tj}; });
  DependencyMap map{ti, tj, s.h, s.w, std::vector<double>(s.plane(), 0.0), Method::kPerturbation};
  for (std::size_t k = 0; k < probes.size(); ++k) {
    double& v = map.values[static_cast<std::size_t>(probes[k].i) * s.w + probes[k].j];
    v = std::max(v, out[k] / delta);
  }
  return map;
}

JinvReport check_j_invariance(const ImageFn& f, const Shape& shape, int n_pixels, Rng& rng, const JinvOptions& opts) {
  if (n_pixels < 1) throw std::invalid_argument("check_j_invariance: n_pixels must be >= 1");
  if (shape.n != 1) throw ShapeError("check_j_invariance: expected batch 1, got " + shape.str());
  const Tensor x = Tensor::randn(shape, rng);
  const Tensor base = f(x);

  const int total = shape.h * shape.w;
  std::vector<int> order(static_cast<std::size_t>(total));
  std::iota(order.begin(), order.end(), 0);
  if (n_pixels < total) {
    // Partial Fisher-Yates: the first n_pixels entries become a uniform sample.
    for (int k = 0; k < n_pixels; ++k) {
      const int r = k + static_cast<int>(rng.below(static_cast<std::uint64_t>(total - k)));
      std::swap(order[static_cast<std::size_t>(k)], order[static_cast<std::size_t>(r)]);
    }
    order.resize(static_cast<std::size_t>(n_pixels));
  }

  std::vector<Probe> probes;
  for (int idx : order)
    for (int c = 0; c < shape.c; ++c)
      for (double sign : {1.0, -1.0}) probes.push_back({c, idx / shape.w, idx % shape.w, sign * opts.delta});
  const auto out = probe_outputs(f, x, base, probes, opts.chunk, [](const Probe& p) { return std::pair{p.i, p.j}; });

  JinvReport report;
  report.pixels_tested = static_cast<int>(order.size());
  report.tolerance = opts.tolerance;
  const std::size_t per_pixel = static_cast<std::size_t>(shape.c) * 2;
  for (std::size_t t = 0; t < order.size(); ++t) {
    double m = 0.0;
    for (std::size_t k = 0; k < per_pixel; ++k) m = std::max(m, out[t * per_pixel + k] / opts.delta);
    report.max_self_dependency = std::max(report.max_self_dependency, m);
    if (m > opts.tolerance) report.violating_pixels.push_back({order[t] / shape.w, order[t] % shape.w, m});
  }
  report.passed = report.max_self_dependency <= opts.tolerance;
  return report;
}

}  // namespace puca::jinv
