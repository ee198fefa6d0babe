#include <cmath>
#include <set>

#include "doctest.h"
#include "helpers.hpp"
#include "puca/image_io.hpp"
#include "puca/jinv.hpp"
#include "puca/nn.hpp"

using namespace puca;
using namespace puca::jinv;
using testing::randn;

namespace {

const nn::ConvSpec kMean3{1, 1, 3, 1, 1, false};

Var mean3(const Var& x) { return nn::conv2d(x, Var(Tensor::full(kMean3.weight_shape(), 1.0 / 9.0)), std::nullopt, kMean3); }

// Every offset reachable by one path through the masked tap set followed by
// `depth` three-tap dilated layers, enumerated explicitly.
void enumerate_paths(int d, int depth, int at, std::set<int>& out) {
  if (depth == 0) {
    out.insert(at);
    return;
  }
  for (int step : {-d, 0, d}) enumerate_paths(d, depth - 1, at + step, out);
}

PucaConfig rf_config(int levels) {
  PucaConfig c;
  c.levels = levels;
  c.base_channels = 4;
  c.dabs_per_level.assign(static_cast<std::size_t>(levels - 1), 1);
  c.dabs_bottleneck = 1;
  return c;
}

}  // namespace

TEST_SUITE("jinv") {
  TEST_CASE("dependency maps of the identity and a box filter") {
    const Tensor x = randn({1, 1, 7, 7}, 1);
    const DependencyMap id = dependency_map_grad([](const Var& v) { return v; }, x, 3, 4);
    CHECK(id.support(0.0) == 1);
    CHECK(id.at(3, 4) == 1.0);
    CHECK(id.self() == 1.0);

    const DependencyMap box = dependency_map_grad(mean3, x, 3, 3);
    CHECK(box.support(1e-15) == 9);
    for (int i = 2; i <= 4; ++i)
      for (int j = 2; j <= 4; ++j) CHECK(box.at(i, j) == doctest::Approx(1.0 / 9.0).epsilon(1e-14));

    const DependencyMap pb = dependency_map_perturb([](const Tensor& t) { return mean3(Var(t)).value(); }, x, 0, 0, 1.0);
    CHECK(pb.method == Method::kPerturbation);
    CHECK(pb.support(1e-12) == 4);  // corner: zero padding cuts the window
    CHECK(pb.at(1, 1) == doctest::Approx(1.0 / 9.0).epsilon(1e-12));

    CHECK_THROWS_AS(dependency_map_grad(mean3, x, 7, 0), ShapeError);
    CHECK_THROWS_AS(dependency_map_grad(mean3, x, 0, -1), ShapeError);
    CHECK_THROWS_AS(dependency_map_grad(mean3, randn({2, 1, 7, 7}, 2), 0, 0), ShapeError);
    CHECK_THROWS(dependency_map_perturb([](const Tensor& t) { return t; }, x, 0, 0, 0.0));
  }

  TEST_CASE("perturbation maps: constant and identity functions") {
    const Tensor x = randn({1, 2, 5, 5}, 3);
    const DependencyMap c = dependency_map_perturb([](const Tensor& t) { return Tensor(t.shape()); }, x, 2, 2, 1.0);
    CHECK(c.support(0.0) == 0);
    const DependencyMap id = dependency_map_perturb([](const Tensor& t) { return t; }, x, 1, 3, 0.5, 3);
    CHECK(id.support(1e-12) == 1);
    CHECK(id.at(1, 3) == doctest::Approx(1.0).epsilon(1e-12));
  }

  TEST_CASE("gradient and perturbation maps agree on a linear stack") {
    Rng rng(4);
    const ImageFn f = masked_dilated_stack(2, 2, rng, 3);
    const Tensor x = randn({1, 1, 12, 12}, 5);
    // linear, so the map does not depend on delta
    const DependencyMap pm = dependency_map_perturb(f, x, 6, 5, 1.0);
    const DependencyMap pm2 = dependency_map_perturb(f, x, 6, 5, 0.25);
    for (std::size_t k = 0; k < pm.values.size(); ++k) CHECK(pm.values[k] == doctest::Approx(pm2.values[k]).epsilon(1e-9));

    const nn::ConvSpec s1{1, 2, 3, 1, 1, true}, s2{2, 1, 3, 2, 1, false};
    const Tensor w1 = randn(s1.weight_shape(), 6), w2 = randn(s2.weight_shape(), 7);
    auto g = [&](const Var& v) {
      return nn::conv2d(nn::conv2d(v, Var(w1), std::nullopt, s1), Var(w2), std::nullopt, s2);
    };
    const DependencyMap gm = dependency_map_grad(g, x, 6, 5);
    const DependencyMap gp = dependency_map_perturb([&](const Tensor& t) { return g(Var(t)).value(); }, x, 6, 5, 1.0);
    for (std::size_t k = 0; k < gm.values.size(); ++k) CHECK(gm.values[k] == doctest::Approx(gp.values[k]).epsilon(1e-9));
    CHECK(gm.self() == 0.0);
  }

  TEST_CASE("check_j_invariance on trivial functions") {
    Rng rng(8);
    const auto zero = check_j_invariance([](const Tensor& t) { return Tensor(t.shape()); }, {1, 1, 6, 6}, 10, rng);
    CHECK(zero.passed);
    CHECK(zero.pixels_tested == 10);
    CHECK(zero.max_self_dependency == 0.0);

    const auto id = check_j_invariance([](const Tensor& t) { return t; }, {1, 2, 5, 5}, 1000, rng);
    CHECK_FALSE(id.passed);
    CHECK(id.pixels_tested == 25);
    CHECK(id.violating_pixels.size() == 25);
    CHECK(id.max_self_dependency == doctest::Approx(1.0).epsilon(1e-12));

    CHECK_THROWS(check_j_invariance([](const Tensor& t) { return t; }, {1, 1, 4, 4}, 0, rng));
    CHECK_THROWS_AS(check_j_invariance([](const Tensor& t) { return t; }, {2, 1, 4, 4}, 3, rng), ShapeError);
  }

  TEST_CASE("NaN outputs count as dependence") {
    Rng rng(9);
    const auto r = check_j_invariance(
        [](const Tensor& t) {
          Tensor y(t.shape());
          for (double& v : y.data()) v = std::nan("");
          return y;
        },
        {1, 1, 3, 3}, 9, rng);
    CHECK_FALSE(r.passed);
  }

  TEST_CASE("rf_oracle examples") {
    CHECK(rf_oracle(2, 0).offsets == std::set<int>{-1, 1});
    CHECK(rf_oracle(2, 1).offsets == std::set<int>{-3, -1, 1, 3});
    CHECK(rf_oracle(3, 0).offsets == std::set<int>{-2, -1, 1, 2});
    CHECK(rf_oracle(3, 1).offsets == std::set<int>{-5, -4, -2, -1, 1, 2, 4, 5});
    CHECK(rf_oracle(2, 3).level == 3);
    CHECK_THROWS(rf_oracle(1, 2));
    CHECK_THROWS(rf_oracle(2, -1));
  }

  TEST_CASE("rf_oracle equals explicit path enumeration and never contains 0") {
    for (int d : {2, 3, 4})
      for (int depth = 0; depth <= 6; ++depth) {
        std::set<int> brute;
        for (int o = -(d - 1); o <= d - 1; ++o)
          if (o != 0) enumerate_paths(d, depth, o, brute);
        const auto rf = rf_oracle(d, depth).offsets;
        CAPTURE(d);
        CAPTURE(depth);
        CHECK(rf == brute);
        CHECK(rf.count(0) == 0);
      }
  }

  TEST_CASE("rf_oracle matches perturbation support of the 1-D stack") {
    for (int d : {2, 3})
      for (int depth = 0; depth <= 4; ++depth) {
        Rng rng(100 + static_cast<std::uint64_t>(10 * d + depth));
        const ImageFn f = masked_dilated_stack(d, depth, rng);
        const int width = 2 * (d - 1 + depth * d) + 9;
        CAPTURE(d);
        CAPTURE(depth);
        CHECK(perturbation_support_1d(f, width, width / 2) == rf_oracle(d, depth).offsets);
      }
  }

  TEST_CASE("rf_oracle_2d contains the 1-D field on each axis and never the origin") {
    for (int d : {2, 3})
      for (int depth = 0; depth <= 3; ++depth) {
        const auto rf2 = rf_oracle_2d(d, depth);
        CHECK(rf2.count({0, 0}) == 0);
        for (int o : rf_oracle(d, depth).offsets) {
          CHECK(rf2.count({o, 0}) == 1);
          CHECK(rf2.count({0, o}) == 1);
        }
      }
  }

  TEST_CASE("patch-unshuffle harness") {
    CHECK(proposition2_harness(2, 2, 3).preserved);
    CHECK(proposition2_harness(3, 6, 3).preserved);
    CHECK(proposition2_harness(2, 4, 2).preserved);
    CHECK(proposition2_harness(2, 1, 3).preserved);
    const Prop2Result bad = proposition2_harness(2, 3, 1);
    CHECK_FALSE(bad.preserved);
    REQUIRE(bad.witness.has_value());
    CHECK(*bad.witness == 3);
    CHECK_THROWS(proposition2_harness(1, 2, 1));
    CHECK_THROWS(proposition2_harness(2, 0, 1));
  }

  TEST_CASE("harness verdict agrees with the 2-D network") {
    for (int d : {2, 3})
      for (int p : {1, 2, 3, 4, 6})
        for (int depth = 0; depth <= 2; ++depth) {
          Rng rng(static_cast<std::uint64_t>(1000 + 100 * d + 10 * p + depth));
          const ImageFn f = prop2_network(d, p, depth, rng);
          const int size = std::max(2 * p * p, 16);
          const auto report = check_j_invariance(f, {1, 1, size, size}, 256, rng, {1e-9, 1.0, 64});
          CAPTURE(d);
          CAPTURE(p);
          CAPTURE(depth);
          CHECK(report.passed == proposition2_harness(d, p, depth).preserved);
        }
  }

  TEST_CASE("masked head alone sees a (2d-1)^2 - 1 neighbourhood") {
    for (int d : {2, 3}) {
      Rng rng(static_cast<std::uint64_t>(d));
      const ImageFn f = masked_dilated_stack(d, 0, rng);
      const DependencyMap m = dependency_map_perturb(f, randn({1, 1, 11, 11}, 12), 5, 5, 1.0);
      CHECK(m.support(1e-12) == (2 * d - 1) * (2 * d - 1) - 1);
      CHECK(m.self() == 0.0);
    }
  }

  TEST_CASE("single-level model support stays inside the 2-D oracle") {
    PucaConfig c = rf_config(1);
    c.dabs_bottleneck = 2;
    const Model m = build_model(c);
    const int size = 32;
    const DependencyMap map = model_rf_map(m, size);
    const auto rf2 = rf_oracle_2d(c.dilation, 2);  // one dilated tap layer per DAB
    CHECK(map.self() == 0.0);
    int outside = 0;
    for (int i = 0; i < size; ++i)
      for (int j = 0; j < size; ++j)
        if (map.at(i, j) > 1e-12 && rf2.count({i - size / 2, j - size / 2}) == 0) ++outside;
    CHECK(outside == 0);
    CHECK(map.support(1e-12) > 0);
  }

  TEST_CASE("support grows with depth and the centre stays blind") {
    int previous = 0;
    for (int levels = 1; levels <= 3; ++levels) {
      const Model m = build_model(rf_config(levels));
      const DependencyMap map = model_rf_map(m, 64);
      const int support = map.support(1e-9);
      CAPTURE(levels);
      CHECK(support > previous);
      CHECK(map.self() == 0.0);
      previous = support;
    }
  }

  TEST_CASE("full attention makes the field global but keeps the blind spot") {
    const Model m = build_model(rf_config(2));
    const DependencyMap held = model_rf_map(m, 32);
    const DependencyMap full = model_rf_map(m, 32, {false, 1e-12});
    CHECK(full.support(1e-12) > held.support(1e-12));
    CHECK(full.self() == 0.0);
  }

  TEST_CASE("heatmap rendering") {
    testing::TempDir dir("heatmap");
    DependencyMap zero{1, 1, 3, 4, std::vector<double>(12, 0.0), Method::kGradient};
    for (double v : testing::values(heatmap_image(zero))) CHECK(v == 0.0);

    DependencyMap impulse = zero;
    impulse.values[5] = 0.37;
    const Tensor img = heatmap_image(impulse);
    CHECK(img.shape() == Shape{1, 1, 3, 4});
    CHECK(img.at(0, 0, 1, 1) == 1.0);
    int lit = 0;
    for (double v : img.data()) lit += v > 0.0;
    CHECK(lit == 1);

    DependencyMap ramp = zero;
    for (std::size_t k = 0; k < 12; ++k) ramp.values[k] = static_cast<double>(k);
    for (const char* name : {"m.png", "m.pgm"}) {
      const std::string path = dir.file(name);
      render_map(ramp, path);
      const Tensor back = io::read_image(path);
      const Tensor want = heatmap_image(ramp);
      CHECK(max_abs_diff(back, want) <= 0.5 / 255.0 + 1e-12);
      const auto bytes = io::read_file(path);
      render_map(ramp, path);
      CHECK(io::read_file(path) == bytes);
    }
  }
}
