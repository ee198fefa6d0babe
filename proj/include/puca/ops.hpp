#pragma once

#include <vector>

#include "puca/autograd.hpp"

namespace puca {

// Elementwise arithmetic. `b` may match `a` exactly, be a scalar (1,1,1,1), or
// be a per-channel (1,c,1,1) tensor broadcast over batch and space. Any other
// combination is a ShapeError.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);

Var add_scalar(const Var& a, double s);
Var mul_scalar(const Var& a, double s);

// Reductions keep rank 4: reduced axes become size 1.
Var reduce_sum(const Var& a, const std::vector<int>& axes);
Var reduce_mean(const Var& a, const std::vector<int>& axes);
Var sum(const Var& a);
Var mean(const Var& a);

// Sum over channels of a[n, :, i, j], shape (1,1,1,1). Used to seed
// dependency maps from a single output pixel.
Var pixel_sum(const Var& a, int n, int i, int j);

// Dot product with a constant weight tensor of the same shape.
Var weighted_sum(const Var& a, const Tensor& weights);

}  // namespace puca
