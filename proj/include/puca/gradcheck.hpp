#pragma once

#include <functional>

#include "puca/tensor.hpp"

namespace puca {

using ScalarFn = std::function<double(const Tensor&)>;

// Central-difference estimate (f(x+h e_i) - f(x-h e_i)) / 2h for every coordinate.
Tensor finite_difference_grad(const ScalarFn& f, const Tensor& x, double step = 1e-6);

// max|a-b| / max(max|a|, max|b|); 0 when both are identically zero.
double relative_error(const Tensor& a, const Tensor& b);

}  // namespace puca
