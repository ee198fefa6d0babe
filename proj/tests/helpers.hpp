#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <unistd.h>

#include "puca/autograd.hpp"
#include "puca/gradcheck.hpp"
#include "puca/model.hpp"
#include "puca/ops.hpp"

namespace puca::testing {

using VarFn = std::function<Var(const Var&)>;

// Relative error between the tape gradient and central differences of
// <f(x), w> for a fixed random projection w.
inline double grad_error(const VarFn& f, const Tensor& x, std::uint64_t seed = 7) {
  Rng rng(seed);
  const Tensor w = Tensor::randn(f(Var(x)).shape(), rng);
  Tape tape;
  const Var xv = tape.leaf(x);
  const Gradients g = tape.backward(weighted_sum(f(xv), w));
  const Tensor analytic = g.has(xv) ? g.of(xv) : Tensor(x.shape());
  const Tensor numeric =
      finite_difference_grad([&](const Tensor& t) { return weighted_sum(f(Var(t)), w).value().item(); }, x);
  return relative_error(analytic, numeric);
}

// Same check for one named parameter of a store; fn maps bound parameters to
// an output tensor.
inline double param_grad_error(const ParamStore& store, const std::string& name,
                               const std::function<Var(const BoundParams&)>& fn, std::uint64_t seed = 11) {
  Rng rng(seed);
  const Tensor w = Tensor::randn(fn(BoundParams(store)).shape(), rng);
  Tape tape;
  const BoundParams bound(store, &tape);
  const Gradients g = tape.backward(weighted_sum(fn(bound), w));
  const Var& leaf = bound[name];
  const Tensor analytic = g.has(leaf) ? g.of(leaf) : Tensor(leaf.shape());
  const Tensor numeric = finite_difference_grad(
      [&](const Tensor& t) {
        ParamStore copy = store;
        copy.get(name) = t;
        return weighted_sum(fn(BoundParams(copy)), w).value().item();
      },
      store.get(name));
  return relative_error(analytic, numeric);
}

// Owned copy, safe to iterate over when the tensor is a temporary.
inline std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

inline Tensor randn(Shape s, std::uint64_t seed, double sigma = 1.0) {
  Rng rng(seed);
  return Tensor::randn(s, rng, sigma);
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() / ("puca_test_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

}  // namespace puca::testing
