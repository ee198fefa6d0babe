#include <cmath>

#include "doctest.h"
#include "helpers.hpp"
#include "puca/checkpoint.hpp"
#include "puca/jinv.hpp"
#include "puca/model.hpp"
#include "puca/nn.hpp"

using namespace puca;
using testing::grad_error;
using testing::randn;

namespace {

PucaConfig small_config(int levels = 2) {
  PucaConfig c;
  c.levels = levels;
  c.base_channels = 4;
  c.dabs_per_level.assign(static_cast<std::size_t>(levels - 1), 1);
  c.dabs_bottleneck = 1;
  return c;
}

// Perturbs the network input and returns the largest |change| at the same pixel.
double self_dependency(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, int i, int j) {
  const Tensor base = f(x);
  double worst = 0.0;
  for (double delta : {1.0, -1.0}) {
    Tensor xp = x;
    for (int c = 0; c < x.shape().c; ++c) xp.at(0, c, i, j) += delta;
    const Tensor y = f(xp);
    for (int c = 0; c < y.shape().c; ++c) worst = std::max(worst, std::abs(y.at(0, c, i, j) - base.at(0, c, i, j)));
  }
  return worst;
}

}  // namespace

TEST_SUITE("model") {
  TEST_CASE("config validation") {
    PucaConfig c;
    CHECK_NOTHROW(c.validate());
    CHECK(c.j_invariant());
    c.base_channels = 3;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = PucaConfig{};
    c.dilation = 1;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = PucaConfig{};
    c.dabs_per_level = {2, 2, 2};
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = PucaConfig{};
    c.in_channels = 2;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    CHECK_THROWS_AS(downsample_from_string("bilinear"), ConfigError);

    c = PucaConfig{};
    c.patch = 3;
    CHECK_FALSE(c.j_invariant());
    c.dilation = 3;
    CHECK(c.j_invariant());
    c.downsample = Downsample::kPixel;
    CHECK_FALSE(c.j_invariant());
  }

  TEST_CASE("spatial multiple") {
    PucaConfig c;
    CHECK(c.spatial_multiple() == 8);  // p^2 at level 1, then p again
    c.levels = 1;
    c.dabs_per_level.clear();
    CHECK(c.spatial_multiple() == 1);
    c = PucaConfig{};
    c.downsample = Downsample::kPixel;
    CHECK(c.spatial_multiple() == 4);
  }

  TEST_CASE("build_model refuses non-invariant configs unless asked") {
    PucaConfig c;
    c.patch = 3;
    CHECK_THROWS_AS(build_model(c), ConfigError);
    CHECK_NOTHROW(build_model(c, true));
  }

  TEST_CASE("parameters are a deterministic function of the config") {
    const PucaConfig c;
    const Model a = build_model(c), b = build_model(c);
    REQUIRE(a.params.size() == b.params.size());
    auto ib = b.params.begin();
    for (const auto& [name, t] : a.params) {
      CHECK(name == ib->first);
      CHECK(bit_equal(t, ib->second));
      ++ib;
    }
    PucaConfig other = c;
    other.seed = 1;
    const Model d = build_model(other);
    CHECK(d.params.scalar_count() == a.params.scalar_count());
    CHECK_FALSE(bit_equal(d.params.get("tail.conv2.weight"), a.params.get("tail.conv2.weight")));
  }

  TEST_CASE("initialization") {
    PucaConfig c;
    c.base_channels = 100;
    c.levels = 1;
    c.dabs_per_level.clear();
    c.dabs_bottleneck = 1;
    const Model m = build_model(c);
    const Tensor& w = m.params.get(Model::kMaskedWeight);
    for (int o = 0; o < 100; ++o)
      for (int i = 0; i < 100; ++i) CHECK(w.at(o, i, 1, 1) == 0.0);
    for (double v : m.params.get("mid.dab0.norm1.gamma").data()) CHECK(v == 1.0);
    for (double v : m.params.get("mid.dab0.norm2.beta").data()) CHECK(v == 0.0);
    for (double v : m.params.get("head.conv1.bias").data()) CHECK(v == 0.0);
    // fan_in 100
    double peak = 0.0;
    for (double v : m.params.get("head.conv1.weight").data()) peak = std::max(peak, std::abs(v));
    CHECK(peak <= 0.1);
    CHECK(peak > 0.09);
    // depthwise: fan_in 9
    for (double v : m.params.get("mid.dab0.ddc.weight").data()) CHECK(std::abs(v) <= 1.0 / 3.0);
  }

  TEST_CASE("wiring: level count and channel schedule") {
    PucaConfig one;
    one.levels = 1;
    one.dabs_per_level.clear();
    const Model m1 = build_model(one);
    for (const auto& [name, t] : m1.params) {
      CHECK(name.rfind("enc", 0) != 0);
      CHECK(name.rfind("dec", 0) != 0);
    }
    const Model m3 = build_model(PucaConfig{});
    CHECK(m3.params.get("mid.dab0.norm1.gamma").shape().c == 64);  // 4C at L=3
    CHECK(m3.params.get("enc1.down.weight").shape() == Shape{32, 64, 1, 1});
    CHECK(m3.params.get("dec2.up.weight").shape() == Shape{128, 64, 1, 1});
    CHECK(m3.params.get(Model::kMaskedWeight).shape() == Shape{16, 16, 3, 3});
  }

  TEST_CASE("enforce_mask re-zeros the center") {
    Model m = build_model(small_config());
    m.params.get(Model::kMaskedWeight).at(0, 0, 1, 1) = 5.0;
    m.enforce_mask();
    CHECK(m.params.get(Model::kMaskedWeight).at(0, 0, 1, 1) == 0.0);
  }

  TEST_CASE("dab is the identity when its residual branches are zero") {
    ParamStore store;
    Rng rng(1);
    add_dab_params(store, "blk", 4, rng);
    for (const char* name : {"blk.conv_out.weight", "blk.conv_out.bias", "blk.ffn_out.weight", "blk.ffn_out.bias"}) {
      Tensor& t = store.get(name);
      t = Tensor(t.shape());
    }
    const Tensor x = randn({2, 4, 6, 6}, 2);
    const BoundParams p(store);
    CHECK(bit_equal(dab_forward(x, p, "blk", 2).value(), x));
  }

  TEST_CASE("dab keeps the shape and rejects the wrong width") {
    ParamStore store;
    Rng rng(3);
    add_dab_params(store, "blk", 6, rng);
    const BoundParams p(store);
    CHECK(dab_forward(randn({1, 6, 5, 7}, 4), p, "blk", 2).shape() == Shape{1, 6, 5, 7});
    CHECK_THROWS_AS(dab_forward(randn({1, 4, 5, 7}, 4), p, "blk", 2), ShapeError);
  }

  TEST_CASE("a dab after the masked head keeps the blind spot") {
    ParamStore store;
    Rng rng(5);
    store.add("m.weight", Tensor::randn({4, 1, 3, 3}, rng));
    add_dab_params(store, "blk", 4, rng);
    // non-trivial norms so every path is active
    store.get("blk.norm1.beta") = Tensor::randn({1, 4, 1, 1}, rng);
    store.get("blk.norm2.beta") = Tensor::randn({1, 4, 1, 1}, rng);
    const BoundParams p(store);
    auto f = [&](const Tensor& x) {
      const Var h = nn::conv2d(x, p["m.weight"], std::nullopt, {1, 4, 3, 1, 1, true});
      return dab_forward(h, p, "blk", 2).value();
    };
    const Tensor x = randn({1, 1, 12, 12}, 6);
    for (int i = 0; i < 12; ++i)
      for (int j = 0; j < 12; ++j) CHECK(self_dependency(f, x, i, j) == 0.0);
  }

  TEST_CASE("forward shape, determinism and divisibility") {
    const Model m = build_model(small_config(3));
    const Tensor x = randn({2, 1, 16, 8}, 7);
    const Tensor y = forward(m, x);
    CHECK(y.shape() == x.shape());
    CHECK(bit_equal(y, forward(m, x)));
    try {
      forward(m, randn({1, 1, 12, 8}, 8));
      FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
      CHECK(std::string(e.what()).find("multiple of 8") != std::string::npos);
    }
  }

  TEST_CASE("denoise pads, crops and is deterministic") {
    const Model m = build_model(small_config(2));
    for (int s : {1, 2, 3}) {
      const Tensor x = randn({1, 1, 13, 10}, 9 + s);
      const Tensor y = denoise(m, x, s);
      CHECK(y.shape() == x.shape());
      CHECK(bit_equal(y, denoise(m, x, s)));
    }
    // s = 1 on an aligned image is the bare network
    const Tensor x = randn({1, 1, 8, 8}, 20);
    CHECK(max_abs_diff(denoise(m, x, 1), forward(m, x)) == 0.0);
  }

  TEST_CASE("forward is J-invariant at every pixel for p = d") {
    const Model m = build_model(small_config(3));
    const Tensor x = randn({1, 1, 16, 16}, 21);
    auto f = [&](const Tensor& t) { return forward(m, t); };
    for (int i = 0; i < 16; ++i)
      for (int j = 0; j < 16; ++j) CHECK(self_dependency(f, x, i, j) == 0.0);
  }

  TEST_CASE("denoise is J-invariant end to end for several strides") {
    const Model m = build_model(small_config(2));
    for (int s : {1, 2, 3}) {
      Rng rng(30 + s);
      auto f = [&](const Tensor& t) {
        std::vector<Tensor> outs;
        for (int n = 0; n < t.shape().n; ++n) outs.push_back(denoise(m, t.batch_slice(n, n + 1), s));
        return stack_batch(outs);
      };
      const auto report = jinv::check_j_invariance(f, {1, 1, 18, 18}, 200, rng);
      CHECK(report.passed);
      CHECK(report.max_self_dependency == 0.0);
    }
  }

  TEST_CASE("rgb models") {
    PucaConfig c = small_config(2);
    c.in_channels = 3;
    const Model m = build_model(c);
    const Tensor x = randn({1, 3, 9, 9}, 40);
    CHECK(denoise(m, x, 2).shape() == x.shape());
    CHECK_THROWS_AS(denoise(m, randn({1, 1, 9, 9}, 41), 2), ShapeError);
  }

  TEST_CASE("dab gradients with respect to input and every parameter") {
    ParamStore store;
    Rng rng(50);
    add_dab_params(store, "blk", 2, rng);
    for (auto& [name, t] : store) t = Tensor::randn(t.shape(), rng, 0.5);
    const Tensor x = randn({1, 2, 4, 4}, 51);
    CHECK(grad_error([&](const Var& v) { return dab_forward(v, BoundParams(store), "blk", 2); }, x) < 1e-5);
    for (const auto& [name, t] : store) {
      CAPTURE(name);
      CHECK(testing::param_grad_error(store, name, [&](const BoundParams& p) { return dab_forward(x, p, "blk", 2); }) <
            1e-5);
    }
  }
}
