#include "puca/gradcheck.hpp"

#include <algorithm>
#include <stdexcept>

namespace puca {

Tensor finite_difference_grad(const ScalarFn& f, const Tensor& x, double step) {
  if (!(step > 0.0)) throw std::invalid_argument("finite_difference_grad: step must be positive");
  Tensor grad(x.shape());
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe.raw()[i];
    probe.raw()[i] = orig + step;
    const double up = f(probe);
    probe.raw()[i] = orig - step;
    const double down = f(probe);
    probe.raw()[i] = orig;
    grad.raw()[i] = (up - down) / (2.0 * step);
  }
  return grad;
}

double relative_error(const Tensor& a, const Tensor& b) {
  const double scale = std::max(max_abs(a), max_abs(b));
  if (scale == 0.0) return 0.0;
  return max_abs_diff(a, b) / scale;
}

}  // namespace puca
