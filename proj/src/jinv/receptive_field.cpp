#include <algorithm>
#include <cmath>
#include <vector>

#include "puca/jinv.hpp"
#include "puca/nn.hpp"

namespace puca::jinv {

RfSet rf_oracle(int d, int depth) {
  if (d < 2) throw std::invalid_argument("rf_oracle: dilation must be >= 2");
  if (depth < 0) throw std::invalid_argument("rf_oracle: depth must be >= 0");
  RfSet rf;
  for (int o = 1; o <= d - 1; ++o) {
    rf.offsets.insert(o);
    rf.offsets.insert(-o);
  }
  for (int l = 1; l <= depth; ++l) {
    std::set<int> next;
    for (int i : rf.offsets)
      for (int step : {-d, 0, d}) next.insert(i + step);
    rf.offsets = std::move(next);
    rf.level = l;
  }
  return rf;
}

std::set<std::pair<int, int>> rf_oracle_2d(int d, int depth) {
  if (d < 2) throw std::invalid_argument("rf_oracle_2d: dilation must be >= 2");
  if (depth < 0) throw std::invalid_argument("rf_oracle_2d: depth must be >= 0");
  std::set<std::pair<int, int>> rf;
  for (int a = -(d - 1); a <= d - 1; ++a)
    for (int b = -(d - 1); b <= d - 1; ++b)
      if (a != 0 || b != 0) rf.insert({a, b});
  for (int l = 0; l < depth; ++l) {
    std::set<std::pair<int, int>> next;
    for (const auto& [a, b] : rf)
      for (int sa : {-d, 0, d})
        for (int sb : {-d, 0, d}) next.insert({a + sa, b + sb});
    rf = std::move(next);
  }
  return rf;
}

Prop2Result proposition2_harness(int d, int p, int depth) {
  if (d < 2) throw std::invalid_argument("proposition2_harness: dilation must be >= 2");
  if (p < 1) throw std::invalid_argument("proposition2_harness: patch size must be >= 1");
  const RfSet rf = rf_oracle(d, depth);
  std::vector<int> offsets(rf.offsets.begin(), rf.offsets.end());
  std::sort(offsets.begin(), offsets.end(), [](int a, int b) {
    return std::abs(a) != std::abs(b) ? std::abs(a) < std::abs(b) : a > b;
  });
  const int pp = p * p;
  auto slot = [p, pp](int i) { return p * (i / pp) + i % p; };
  // Place J far enough from 0 that every dependent index stays non-negative.
  const int reach = std::abs(offsets.empty() ? 0 : offsets.back()) + std::abs(offsets.empty() ? 0 : offsets.front());
  const int base = (reach / pp + 2) * pp;
  for (int o : offsets) {
    for (int a = 0; a < pp; ++a) {
      const int j = base + a;
      if (slot(j + o) == slot(j)) return {false, o, a};
    }
  }
  return {};
}

namespace {

Var run_stack(const Var& x, const std::vector<Tensor>& weights, const std::vector<nn::ConvSpec>& specs) {
  Var y = x;
  for (std::size_t k = 0; k < specs.size(); ++k) y = nn::conv2d(y, Var(weights[k]), std::nullopt, specs[k]);
  return y;
}

void append_stack(std::vector<Tensor>& weights, std::vector<nn::ConvSpec>& specs, int d, int depth, int channels,
                  Rng& rng) {
  specs.push_back({1, channels, 2 * d - 1, 1, 1, true});
  for (int l = 0; l < depth; ++l) specs.push_back({channels, channels, 3, d, 1, false});
  for (const auto& s : specs) weights.push_back(Tensor::randn(s.weight_shape(), rng));
}

}  // namespace

ImageFn masked_dilated_stack(int d, int depth, Rng& rng, int channels) {
  std::vector<Tensor> weights;
  std::vector<nn::ConvSpec> specs;
  append_stack(weights, specs, d, depth, channels, rng);
  if (channels != 1) {
    specs.push_back({channels, 1, 1, 1, 1, false});
    weights.push_back(Tensor::randn(specs.back().weight_shape(), rng));
  }
  return [weights, specs](const Tensor& x) { return run_stack(Var(x), weights, specs).value(); };
}

ImageFn prop2_network(int d, int p, int depth, Rng& rng, int channels) {
  std::vector<Tensor> weights;
  std::vector<nn::ConvSpec> specs;
  append_stack(weights, specs, d, depth, channels, rng);
  const int wide = channels * p * p;
  const nn::ConvSpec mix{wide, wide, 1, 1, 1, false};
  const nn::ConvSpec out{channels, 1, 1, 1, 1, false};
  const Tensor w_mix = Tensor::randn(mix.weight_shape(), rng);
  const Tensor w_out = Tensor::randn(out.weight_shape(), rng);
  return [=](const Tensor& x) {
    Var y = run_stack(Var(x), weights, specs);
    y = nn::patch_unshuffle(y, p);
    y = nn::conv2d(y, Var(w_mix), std::nullopt, mix);
    y = nn::patch_shuffle(y, p);
    return nn::conv2d(y, Var(w_out), std::nullopt, out).value();
  };
}

std::set<int> perturbation_support_1d(const ImageFn& f, int width, int j) {
  Rng rng(0x5eed);
  Tensor x = Tensor::randn({1, 1, 1, width}, rng);
  const Tensor base = f(x);
  x.at(0, 0, 0, j) += 1.0;
  const Tensor moved = f(x);
  std::set<int> offsets;
  for (int i = 0; i < width; ++i) {
    if (moved.at(0, 0, 0, i) != base.at(0, 0, 0, i)) offsets.insert(i - j);
  }
  return offsets;
}

DependencyMap model_rf_map(const Model& model, int size, const SupportOptions& opts, std::uint64_t seed) {
  Rng rng(seed);
  const Tensor x = Tensor::randn({1, model.config.in_channels, size, size}, rng);
  const BoundParams params(model, nullptr);
  const ForwardOptions fo{opts.hold_attention};
  return dependency_map_grad([&](const Var& v) { return forward(model, params, v, fo); }, x, size / 2, size / 2);
}

int rf_support_size(const Model& model, int size, const SupportOptions& opts) {
  return model_rf_map(model, size, opts).support(opts.threshold);
}

}  // namespace puca::jinv
