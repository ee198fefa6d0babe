#include <cmath>

#include "puca/train.hpp"

namespace puca::train {

Var l1_loss(const Var& pred, const Var& target) {
  require_same_shape(pred.shape(), target.shape(), "l1_loss");
  const Tensor& p = pred.value();
  const Tensor& t = target.value();
  const double inv_n = 1.0 / static_cast<double>(p.size());
  double acc = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) acc += std::abs(p.raw()[k] - t.raw()[k]);
  auto pp = pred.ptr();
  auto tp = target.ptr();
  return record(Tensor({1, 1, 1, 1}, acc * inv_n), {pred, target}, [pp, tp, inv_n](const Tensor& g, GradSink& sink) {
    const double go = g.item() * inv_n;
    Tensor grad(pp->shape());
    for (std::size_t k = 0; k < grad.size(); ++k) {
      const double d = pp->raw()[k] - tp->raw()[k];
      grad.raw()[k] = d > 0.0 ? go : (d < 0.0 ? -go : 0.0);
    }
    if (sink.wants(1)) {
      Tensor neg = grad;
      neg *= -1.0;
      sink.add(1, std::move(neg));
    }
    if (sink.wants(0)) sink.add(0, std::move(grad));
  });
}

AdamState AdamState::zeros_like(const ParamStore& params) {
  AdamState s;
  for (const auto& [name, t] : params) {
    s.m.emplace_back(t.shape());
    s.v.emplace_back(t.shape());
  }
  return s;
}

void adam_update(std::span<double> w, std::span<const double> g, std::span<double> m, std::span<double> v,
                 std::int64_t t, const AdamHyper& h) {
  if (g.size() != w.size() || m.size() != w.size() || v.size() != w.size()) {
    throw ShapeError("adam_update: parameter, gradient and moment sizes differ");
  }
  const double c1 = 1.0 - std::pow(h.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(h.beta2, static_cast<double>(t));
  for (std::size_t k = 0; k < w.size(); ++k) {
    m[k] = h.beta1 * m[k] + (1.0 - h.beta1) * g[k];
    v[k] = h.beta2 * v[k] + (1.0 - h.beta2) * g[k] * g[k];
    const double mh = m[k] / c1;
    const double vh = v[k] / c2;
    w[k] -= h.lr * mh / (std::sqrt(vh) + h.eps);
  }
}

void adam_step(Model& model, const std::vector<Tensor>& grads, AdamState& state, const AdamHyper& h) {
  if (grads.size() != model.params.size() || state.m.size() != model.params.size()) {
    throw ShapeError("adam_step: expected " + std::to_string(model.params.size()) + " gradients and moments");
  }
  ++state.t;
  std::size_t k = 0;
  for (auto& [name, w] : model.params) {
    require_same_shape(state.m[k].shape(), w.shape(), "adam_step");
    if (grads[k].empty()) {
      const Tensor zero(w.shape());
      adam_update(w.data(), zero.data(), state.m[k].data(), state.v[k].data(), state.t, h);
    } else {
      require_same_shape(grads[k].shape(), w.shape(), "adam_step");
      adam_update(w.data(), grads[k].data(), state.m[k].data(), state.v[k].data(), state.t, h);
    }
    ++k;
  }
  model.enforce_mask();
}

}  // namespace puca::train
