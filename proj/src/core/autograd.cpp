#include "puca/autograd.hpp"

namespace puca {

Var::Var(Tensor value) : value_(std::make_shared<const Tensor>(std::move(value))) {}

Var::Var(std::shared_ptr<const Tensor> value) : value_(std::move(value)) {}

bool GradSink::wants(std::size_t input) const { return input < inputs_.size() && inputs_[input] >= 0; }

void GradSink::add(std::size_t input, const Tensor& grad) {
  if (!wants(input)) return;
  auto& slot = (*tape_.grads_)[static_cast<std::size_t>(inputs_[input])];
  if (slot) {
    *slot += grad;
  } else {
    require_same_shape(tape_.nodes_[static_cast<std::size_t>(inputs_[input])].shape, grad.shape(), "backward");
    slot = grad;
  }
}

void GradSink::add(std::size_t input, Tensor&& grad) {
  if (!wants(input)) return;
  auto& slot = (*tape_.grads_)[static_cast<std::size_t>(inputs_[input])];
  if (slot) {
    *slot += grad;
  } else {
    require_same_shape(tape_.nodes_[static_cast<std::size_t>(inputs_[input])].shape, grad.shape(), "backward");
    slot = std::move(grad);
  }
}

bool Gradients::has(const Var& v) const {
  return v.tape() == tape_ && v.id() >= 0 && static_cast<std::size_t>(v.id()) < grads_.size() &&
         grads_[static_cast<std::size_t>(v.id())].has_value();
}

const Tensor& Gradients::of(const Var& v) const {
  if (!has(v)) throw std::invalid_argument("no gradient recorded for this variable");
  return *grads_[static_cast<std::size_t>(v.id())];
}

Var Tape::leaf(Tensor value) { return leaf(std::make_shared<const Tensor>(std::move(value))); }

Var Tape::leaf(std::shared_ptr<const Tensor> value) { return append(std::move(value), {}, nullptr); }

Var Tape::append(std::shared_ptr<const Tensor> value, std::vector<int> inputs, BackwardFn fn) {
  Var v(std::move(value));
  v.tape_ = this;
  v.id_ = static_cast<int>(nodes_.size());
  nodes_.push_back(Node{v.shape(), std::move(inputs), std::move(fn)});
  return v;
}

Gradients Tape::backward(const Var& loss) {
  if (loss.tape() != this) throw std::invalid_argument("backward: loss is not recorded on this tape");
  if (!(loss.shape() == Shape{1, 1, 1, 1})) {
    throw ShapeError("backward: loss must have shape (1,1,1,1), got " + loss.shape().str());
  }
  Gradients out;
  out.tape_ = this;
  out.grads_.assign(nodes_.size(), std::nullopt);
  grads_ = &out.grads_;
  out.grads_[static_cast<std::size_t>(loss.id())] = Tensor::ones({1, 1, 1, 1});
  for (int i = loss.id(); i >= 0; --i) {
    auto& node = nodes_[static_cast<std::size_t>(i)];
    auto& g = out.grads_[static_cast<std::size_t>(i)];
    if (!g || !node.backward) continue;
    GradSink sink(*this, node.inputs);
    node.backward(*g, sink);
    // Interior gradients are not needed once propagated.
    if (!node.inputs.empty()) g.reset();
  }
  grads_ = nullptr;
  return out;
}

Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn) {
  Tape* tape = nullptr;
  for (const auto& in : inputs) {
    if (!in.tracked()) continue;
    if (tape && tape != in.tape()) throw std::invalid_argument("op mixes variables from different tapes");
    tape = in.tape();
  }
  if (!tape) return Var(std::move(value));
  std::vector<int> ids;
  ids.reserve(inputs.size());
  for (const auto& in : inputs) ids.push_back(in.tracked() ? in.id() : -1);
  return tape->append(std::make_shared<const Tensor>(std::move(value)), std::move(ids), std::move(fn));
}

}  // namespace puca
