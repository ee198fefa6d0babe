#pragma once

#include <functional>
#include <initializer_list>
#include <memory>
#include <optional>
#include <vector>

#include "puca/tensor.hpp"

namespace puca {

class Tape;

// Handle to an immutable tensor value, optionally recorded on a Tape.
// A Var without a tape is a constant: ops on constants run eagerly and record
// nothing, which is how inference avoids the bookkeeping cost.
class Var {
 public:
  Var() = default;
  Var(Tensor value);  // NOLINT: implicit constant
  explicit Var(std::shared_ptr<const Tensor> value);

  const Tensor& value() const { return *value_; }
  const Shape& shape() const { return value_->shape(); }
  const std::shared_ptr<const Tensor>& ptr() const { return value_; }
  bool defined() const { return value_ != nullptr; }

  Tape* tape() const { return tape_; }
  int id() const { return id_; }
  bool tracked() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  std::shared_ptr<const Tensor> value_;
  Tape* tape_ = nullptr;
  int id_ = -1;
};

// Accumulates gradients for the inputs of one node during backward.
class GradSink {
 public:
  bool wants(std::size_t input) const;
  // Adds grad into the accumulated gradient of input `input`.
  void add(std::size_t input, const Tensor& grad);
  void add(std::size_t input, Tensor&& grad);

 private:
  friend class Tape;
  GradSink(Tape& tape, const std::vector<int>& inputs) : tape_(tape), inputs_(inputs) {}
  Tape& tape_;
  const std::vector<int>& inputs_;
};

using BackwardFn = std::function<void(const Tensor& grad_out, GradSink& sink)>;

class Gradients {
 public:
  bool has(const Var& v) const;
  const Tensor& of(const Var& v) const;

 private:
  friend class Tape;
  std::vector<std::optional<Tensor>> grads_;
  const Tape* tape_ = nullptr;
};

// Eager reverse-mode record. Nodes are appended as ops run, so every node's
// inputs precede it; backward walks the list once in reverse.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value);
  Var leaf(std::shared_ptr<const Tensor> value);

  std::size_t size() const { return nodes_.size(); }

  // Gradients of a (1,1,1,1) loss with respect to every node reachable from it.
  Gradients backward(const Var& loss);

 private:
  friend class GradSink;
  friend Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn);

  struct Node {
    Shape shape;
    std::vector<int> inputs;
    BackwardFn backward;
  };

  Var append(std::shared_ptr<const Tensor> value, std::vector<int> inputs, BackwardFn fn);

  std::vector<Node> nodes_;
  std::vector<std::optional<Tensor>>* grads_ = nullptr;
};

// Wraps the result of an op. If any input is tracked the node is appended to
// that tape; otherwise the result is a plain constant and fn is dropped.
Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn);

}  // namespace puca
