#include "puca/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

namespace puca {

int Shape::dim(int axis) const {
  switch (axis) {
    case 0: return n;
    case 1: return c;
    case 2: return h;
    case 3: return w;
    default: throw ShapeError("axis " + std::to_string(axis) + " out of range for rank-4 tensor");
  }
}

std::string Shape::str() const {
  std::ostringstream os;
  os << '(' << n << ',' << c << ',' << h << ',' << w << ')';
  return os.str();
}

static void check_shape(const Shape& s) {
  if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0) throw ShapeError("negative dimension in shape " + s.str());
}

Tensor::Tensor(Shape shape, double fill) : shape_(shape) {
  check_shape(shape);
  data_.assign(shape.numel(), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(shape), data_(std::move(data)) {
  check_shape(shape);
  if (data_.size() != shape.numel()) {
    throw ShapeError("data length " + std::to_string(data_.size()) + " does not match shape " + shape.str());
  }
}

Tensor Tensor::randn(Shape shape, Rng& rng, double sigma) {
  if (sigma < 0.0) throw std::invalid_argument("randn: sigma must be non-negative");
  Tensor t(shape);
  for (double& v : t.data_) v = sigma * rng.normal();
  if (sigma == 0.0) std::fill(t.data_.begin(), t.data_.end(), 0.0);
  return t;
}

Tensor Tensor::uniform(Shape shape, Rng& rng, double lo, double hi) {
  Tensor t(shape);
  for (double& v : t.data_) v = rng.uniform(lo, hi);
  return t;
}

double Tensor::item() const {
  if (data_.size() != 1) throw ShapeError("item() on non-scalar tensor " + shape_.str());
  return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape.numel() != data_.size()) {
    throw ShapeError("cannot reshape " + shape_.str() + " to " + shape.str());
  }
  return Tensor(shape, data_);
}

Tensor Tensor::batch_slice(int begin, int end) const {
  if (begin < 0 || end > shape_.n || begin > end) {
    throw ShapeError("batch slice [" + std::to_string(begin) + "," + std::to_string(end) + ") out of range for " +
                     shape_.str());
  }
  const std::size_t item = static_cast<std::size_t>(shape_.c) * shape_.plane();
  std::vector<double> out(data_.begin() + static_cast<std::ptrdiff_t>(begin * item),
                          data_.begin() + static_cast<std::ptrdiff_t>(end * item));
  return Tensor({end - begin, shape_.c, shape_.h, shape_.w}, std::move(out));
}

Tensor& Tensor::operator+=(const Tensor& other) {
  require_same_shape(shape_, other.shape_, "operator+=");
  const double* src = other.data_.data();
  double* dst = data_.data();
  const std::size_t n = data_.size();
  for (std::size_t i = 0; i < n; ++i) dst[i] += src[i];
  return *this;
}

Tensor& Tensor::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

bool bit_equal(const Tensor& a, const Tensor& b) {
  if (!(a.shape() == b.shape())) return false;
  return a.size() == 0 || std::memcmp(a.raw(), b.raw(), a.size() * sizeof(double)) == 0;
}

double max_abs(const Tensor& t) {
  double m = 0.0;
  for (double v : t.data()) m = std::max(m, std::abs(v));
  return m;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  require_same_shape(a.shape(), b.shape(), "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

bool all_finite(const Tensor& t) {
  return std::all_of(t.data().begin(), t.data().end(), [](double v) { return std::isfinite(v); });
}

Tensor stack_batch(std::span<const Tensor> parts) {
  if (parts.empty()) return Tensor();
  Shape s = parts[0].shape();
  int total = 0;
  for (const auto& p : parts) {
    if (p.shape().c != s.c || p.shape().h != s.h || p.shape().w != s.w) {
      throw ShapeError("stack_batch: " + p.shape().str() + " incompatible with " + s.str());
    }
    total += p.shape().n;
  }
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(total) * s.c * s.plane());
  for (const auto& p : parts) data.insert(data.end(), p.data().begin(), p.data().end());
  s.n = total;
  return Tensor(s, std::move(data));
}

void require_same_shape(const Shape& a, const Shape& b, const char* op) {
  if (!(a == b)) throw ShapeError(std::string(op) + ": shape mismatch " + a.str() + " vs " + b.str());
}

}  // namespace puca
