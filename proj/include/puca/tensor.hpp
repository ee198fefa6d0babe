#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "puca/rng.hpp"

namespace puca {

// Thrown for every shape or argument mismatch in the tensor and nn layers.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Shape {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  std::size_t numel() const {
    return static_cast<std::size_t>(n) * static_cast<std::size_t>(c) * static_cast<std::size_t>(h) *
           static_cast<std::size_t>(w);
  }
  std::size_t plane() const { return static_cast<std::size_t>(h) * static_cast<std::size_t>(w); }
  int dim(int axis) const;
  std::string str() const;

  bool operator==(const Shape&) const = default;
};

// Dense rank-4 NCHW array of doubles, row-major with w fastest.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(Shape shape) { return Tensor(shape, 0.0); }
  static Tensor ones(Shape shape) { return Tensor(shape, 1.0); }
  static Tensor full(Shape shape, double value) { return Tensor(shape, value); }
  static Tensor randn(Shape shape, Rng& rng, double sigma = 1.0);
  static Tensor uniform(Shape shape, Rng& rng, double lo, double hi);

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }
  const double* raw() const { return data_.data(); }
  double* raw() { return data_.data(); }

  std::size_t index(int n, int c, int h, int w) const {
    return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + h) * shape_.w + w;
  }
  double& at(int n, int c, int h, int w) { return data_[index(n, c, h, w)]; }
  double at(int n, int c, int h, int w) const { return data_[index(n, c, h, w)]; }

  const double* plane(int n, int c) const { return data_.data() + index(n, c, 0, 0); }
  double* plane(int n, int c) { return data_.data() + index(n, c, 0, 0); }

  // Value of a single-element tensor.
  double item() const;

  Tensor reshaped(Shape shape) const;

  // Batch items [begin, end).
  Tensor batch_slice(int begin, int end) const;

  Tensor& operator+=(const Tensor& other);
  Tensor& operator*=(double s);

 private:
  Shape shape_;
  std::vector<double> data_;
};

bool bit_equal(const Tensor& a, const Tensor& b);
double max_abs(const Tensor& t);
double max_abs_diff(const Tensor& a, const Tensor& b);
bool all_finite(const Tensor& t);

// Stacks tensors of identical (c,h,w) along the batch axis.
Tensor stack_batch(std::span<const Tensor> parts);

void require_same_shape(const Shape& a, const Shape& b, const char* op);

}  // namespace puca
