#include "doctest.h"
#include "helpers.hpp"

using namespace puca;
using testing::grad_error;

TEST_SUITE("autograd") {
  TEST_CASE("gradient of sum is ones") {
    Tape tape;
    const Var x = tape.leaf(testing::randn({1, 2, 3, 3}, 1));
    const Gradients g = tape.backward(sum(x));
    for (double v : g.of(x).data()) CHECK(v == 1.0);
  }

  TEST_CASE("gradient of sum(x*x) at 3 is 6") {
    Tape tape;
    const Var x = tape.leaf(Tensor({1, 1, 1, 1}, {3.0}));
    CHECK(tape.backward(sum(mul(x, x))).of(x).item() == 6.0);
  }

  TEST_CASE("shared inputs accumulate") {
    Tape tape;
    const Var x = tape.leaf(Tensor({1, 1, 1, 1}, {2.0}));
    const Var y = add(mul(x, x), x);  // 2x + 1
    CHECK(tape.backward(sum(y)).of(x).item() == 5.0);
  }

  TEST_CASE("non-scalar loss is rejected") {
    Tape tape;
    const Var x = tape.leaf(Tensor({1, 1, 2, 2}));
    CHECK_THROWS_AS(tape.backward(x), ShapeError);
  }

  TEST_CASE("constants record nothing") {
    const Var a(Tensor({1, 1, 2, 2}, 1.0));
    const Var b = add(a, a);
    CHECK_FALSE(b.tracked());
    Tape tape;
    const Var x = tape.leaf(Tensor({1, 1, 2, 2}, 1.0));
    const std::size_t before = tape.size();
    add(x, a);
    CHECK(tape.size() == before + 1);
  }

  TEST_CASE("mixing tapes is an error") {
    Tape t1, t2;
    const Var a = t1.leaf(Tensor({1, 1, 1, 1}, 1.0));
    const Var b = t2.leaf(Tensor({1, 1, 1, 1}, 1.0));
    CHECK_THROWS(add(a, b));
  }

  TEST_CASE("backward is linear in the loss") {
    const Tensor x0 = testing::randn({1, 2, 2, 2}, 3);
    auto f = [](const Var& x) { return sum(mul(x, x)); };
    auto g = [](const Var& x) { return sum(mul_scalar(x, 3.0)); };
    Tape tape;
    const Var x = tape.leaf(x0);
    const Tensor combined = tape.backward(add(mul_scalar(f(x), 2.0), mul_scalar(g(x), -0.5))).of(x);
    Tape tf, tg;
    const Var xf = tf.leaf(x0);
    const Var xg = tg.leaf(x0);
    const Tensor gf = tf.backward(f(xf)).of(xf);
    const Tensor gg = tg.backward(g(xg)).of(xg);
    for (std::size_t k = 0; k < x0.size(); ++k) {
      CHECK(combined.raw()[k] == doctest::Approx(2.0 * gf.raw()[k] - 0.5 * gg.raw()[k]).epsilon(1e-15));
    }
  }

  TEST_CASE("elementwise ops match finite differences") {
    const Tensor x = testing::randn({2, 3, 4, 4}, 10);
    const Tensor same = testing::randn({2, 3, 4, 4}, 11);
    const Tensor scalar = testing::randn({1, 1, 1, 1}, 12);
    const Tensor chan = testing::randn({1, 3, 1, 1}, 13);
    for (const Tensor* other : {&same, &scalar, &chan}) {
      const Tensor o = *other;
      CHECK(grad_error([&](const Var& v) { return add(v, o); }, x) < 1e-5);
      CHECK(grad_error([&](const Var& v) { return sub(v, o); }, x) < 1e-5);
      CHECK(grad_error([&](const Var& v) { return mul(v, o); }, x) < 1e-5);
      // gradient with respect to the broadcast operand
      CHECK(grad_error([&](const Var& v) { return mul(Var(x), v); }, o) < 1e-5);
      CHECK(grad_error([&](const Var& v) { return sub(Var(x), v); }, o) < 1e-5);
    }
    CHECK(grad_error([](const Var& v) { return mul(v, v); }, x) < 1e-5);
    CHECK(grad_error([](const Var& v) { return add_scalar(v, 0.3); }, x) < 1e-5);
    CHECK(grad_error([](const Var& v) { return mul_scalar(v, -1.7); }, x) < 1e-5);
  }

  TEST_CASE("reductions match finite differences") {
    const Tensor x = testing::randn({2, 3, 4, 4}, 20);
    for (const std::vector<int>& axes : std::vector<std::vector<int>>{{0}, {1}, {2, 3}, {0, 1, 2, 3}}) {
      CHECK(grad_error([&](const Var& v) { return reduce_sum(v, axes); }, x) < 1e-5);
      CHECK(grad_error([&](const Var& v) { return reduce_mean(v, axes); }, x) < 1e-5);
    }
    CHECK(grad_error([](const Var& v) { return pixel_sum(v, 1, 2, 3); }, x) < 1e-5);
    CHECK(grad_error([](const Var& v) { return mean(mul(v, v)); }, x) < 1e-5);
  }
}
