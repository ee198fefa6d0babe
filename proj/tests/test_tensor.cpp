#include <cmath>
#include <set>

#include "doctest.h"
#include "helpers.hpp"
#include "puca/ops.hpp"
#include "puca/tensor.hpp"

using namespace puca;

TEST_SUITE("tensor") {
  TEST_CASE("constant fills") {
    for (double v : testing::values(Tensor::zeros({1, 1, 2, 2}))) CHECK(v == 0.0);
    for (double v : testing::values(Tensor::ones({1, 3, 1, 1}))) CHECK(v == 1.0);
    const Tensor f = Tensor::full({1, 1, 1, 1}, 2.5);
    CHECK(f.item() == 2.5);
    CHECK(Tensor::zeros({0, 3, 4, 4}).size() == 0);
  }

  TEST_CASE("data length matches shape") {
    const Tensor t({2, 3, 4, 5});
    CHECK(t.size() == 120);
    CHECK_THROWS_AS(Tensor(Shape{1, 1, 2, 2}, std::vector<double>(3)), ShapeError);
    CHECK_THROWS_AS(Tensor({1, 1, 2, 2}).item(), ShapeError);
  }

  TEST_CASE("row-major layout with w fastest") {
    Tensor t({2, 2, 2, 3});
    for (std::size_t k = 0; k < t.size(); ++k) t.raw()[k] = static_cast<double>(k);
    CHECK(t.at(1, 0, 1, 2) == ((1 * 2 + 0) * 2 + 1) * 3 + 2);
    CHECK(t.plane(1, 1)[0] == t.at(1, 1, 0, 0));
  }

  TEST_CASE("rng is deterministic and seed-sensitive") {
    Rng a(42), b(42), c(43);
    bool differs = false;
    for (int i = 0; i < 100; ++i) {
      const auto x = a.next_u64();
      CHECK(x == b.next_u64());
      differs = differs || x != c.next_u64();
    }
    CHECK(differs);
  }

  TEST_CASE("rng uniform and below stay in range") {
    Rng r(1);
    std::vector<int> counts(7, 0);
    for (int i = 0; i < 70000; ++i) {
      const double u = r.uniform();
      CHECK((u >= 0.0 && u < 1.0));
      const auto k = r.below(7);
      REQUIRE(k < 7);
      ++counts[k];
    }
    for (int c : counts) CHECK(std::abs(c - 10000) < 500);
  }

  TEST_CASE("rng fork gives an independent stream and leaves the parent alone") {
    Rng a(5), b(5);
    Rng child = a.fork(1);
    CHECK(a.next_u64() == b.next_u64());
    CHECK(child.next_u64() != Rng(5).next_u64());
  }

  TEST_CASE("randn") {
    Rng r0(3);
    for (double v : testing::values(Tensor::randn({1, 1, 4, 4}, r0, 0.0))) CHECK(v == 0.0);

    Rng a(42), b(42);
    CHECK(bit_equal(Tensor::randn({2, 3, 5, 5}, a), Tensor::randn({2, 3, 5, 5}, b)));

    Rng r(42);
    const Tensor big = Tensor::randn({1, 1, 1000, 1000}, r, 1.0);
    double mean = 0.0;
    for (double v : big.data()) mean += v;
    mean /= static_cast<double>(big.size());
    double var = 0.0;
    for (double v : big.data()) var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / static_cast<double>(big.size()));
    CHECK(std::abs(mean) < 0.01);
    CHECK(std::abs(sd - 1.0) < 0.01);
  }

  TEST_CASE("elementwise arithmetic") {
    const Tensor x = testing::randn({1, 2, 3, 3}, 1);
    CHECK(bit_equal(mul(x, Tensor::ones(x.shape())).value(), x));
    CHECK(bit_equal(add(x, Tensor::zeros(x.shape())).value(), x));

    const Tensor a({1, 1, 1, 2}, {1, 2});
    const Tensor b({1, 1, 1, 2}, {3, 4});
    const Tensor p = mul(a, b).value();
    CHECK(p.raw()[0] == 3.0);
    CHECK(p.raw()[1] == 8.0);
    const Tensor d = sub(a, b).value();
    CHECK(d.raw()[0] == -2.0);
    CHECK(add_scalar(a, 1.5).value().raw()[1] == 3.5);
    CHECK(mul_scalar(a, -2.0).value().raw()[1] == -4.0);
  }

  TEST_CASE("broadcast: scalar and per-channel only") {
    const Tensor x = testing::randn({2, 3, 2, 2}, 2);
    const Tensor s({1, 1, 1, 1}, {2.0});
    const Tensor y = mul(x, s).value();
    for (std::size_t k = 0; k < x.size(); ++k) CHECK(y.raw()[k] == 2.0 * x.raw()[k]);

    const Tensor ch({1, 3, 1, 1}, {1.0, 10.0, 100.0});
    const Tensor z = add(x, ch).value();
    CHECK(z.at(1, 2, 1, 0) == x.at(1, 2, 1, 0) + 100.0);
    CHECK(z.at(0, 1, 0, 1) == x.at(0, 1, 0, 1) + 10.0);

    try {
      add(x, Tensor({1, 1, 2, 2}));
      FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("(2,3,2,2)") != std::string::npos);
      CHECK(msg.find("(1,1,2,2)") != std::string::npos);
    }
  }

  TEST_CASE("reductions") {
    CHECK(mean(Tensor::ones({1, 1, 4, 4})).value().item() == 1.0);
    CHECK(sum(Tensor::zeros({2, 2, 3, 3})).value().item() == 0.0);
    CHECK(mean(Tensor({1, 1, 1, 4}, {1, 2, 3, 4})).value().item() == 2.5);

    Tensor x({2, 3, 1, 2});
    for (std::size_t k = 0; k < x.size(); ++k) x.raw()[k] = static_cast<double>(k);
    const Tensor r = reduce_sum(x, {2, 3}).value();
    CHECK(r.shape() == Shape{2, 3, 1, 1});
    CHECK(r.at(1, 2, 0, 0) == x.at(1, 2, 0, 0) + x.at(1, 2, 0, 1));
    const Tensor m = reduce_mean(x, {0}).value();
    CHECK(m.shape() == Shape{1, 3, 1, 2});
    CHECK(m.at(0, 1, 0, 1) == (x.at(0, 1, 0, 1) + x.at(1, 1, 0, 1)) / 2.0);

    CHECK_THROWS_AS(reduce_sum(x, {4}), ShapeError);
    CHECK_THROWS_AS(reduce_mean(x, {-1}), ShapeError);
  }

  TEST_CASE("stack and slice along batch") {
    const Tensor a = testing::randn({1, 2, 3, 3}, 4);
    const Tensor b = testing::randn({1, 2, 3, 3}, 5);
    const std::vector<Tensor> parts{a, b};
    const Tensor s = stack_batch(parts);
    CHECK(s.shape() == Shape{2, 2, 3, 3});
    CHECK(bit_equal(s.batch_slice(1, 2), b));
    CHECK_THROWS_AS(stack_batch(std::vector<Tensor>{a, Tensor({1, 1, 3, 3})}), ShapeError);
  }

  TEST_CASE("finite difference oracle") {
    const Tensor x = testing::randn({1, 2, 2, 2}, 6);
    const Tensor g = finite_difference_grad(
        [](const Tensor& t) {
          double s = 0.0;
          for (double v : t.data()) s += v;
          return s;
        },
        x);
    for (double v : g.data()) CHECK(v == doctest::Approx(1.0).epsilon(1e-8));

    const Tensor two({1, 1, 1, 1}, {2.0});
    const Tensor sq = finite_difference_grad([](const Tensor& t) { return t.item() * t.item(); }, two);
    CHECK(std::abs(sq.item() - 4.0) < 1e-8);

    CHECK_THROWS(finite_difference_grad([](const Tensor&) { return 0.0; }, two, 0.0));
    CHECK(relative_error(Tensor({1, 1, 1, 2}), Tensor({1, 1, 1, 2})) == 0.0);
  }
}
