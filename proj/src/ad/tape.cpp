#include "mmbeam/ad/tape.hpp"

#include <cmath>

#include "mmbeam/common.hpp"

namespace mmbeam::ad {

template <typename T>
Var<T> Tape<T>::push(Node node) {
  nodes_.push_back(std::move(node));
  Node& n = nodes_.back();
  if (!n.value) n.value = &n.own;
  return Var<T>{this, static_cast<int>(nodes_.size()) - 1};
}

template <typename T>
Var<T> Tape<T>::constant(Tensor<T> value) {
  Node n;
  n.own = std::move(value);
  return push(std::move(n));
}

template <typename T>
Var<T> Tape<T>::variable(Tensor<T> value) {
  Node n;
  n.own = std::move(value);
  n.requires_grad = grad_enabled_;
  return push(std::move(n));
}

template <typename T>
Var<T> Tape<T>::parameter(Parameter<T>& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var<T>{this, it->second};
  Node n;
  n.value = &p.value;
  n.param = &p;
  n.requires_grad = grad_enabled_;
  Var<T> v = push(std::move(n));
  param_nodes_.emplace(&p, v.id);
  return v;
}

template <typename T>
Var<T> Tape<T>::record(Tensor<T> value, const std::vector<int>& parents, BackwardFn fn) {
  for (T x : value.vec()) {
    if (!std::isfinite(x)) throw NumericError("non-finite value produced on the tape (node " +
                                              std::to_string(nodes_.size()) + ")");
  }
  Node n;
  n.own = std::move(value);
  if (grad_enabled_) {
    for (int p : parents) n.requires_grad = n.requires_grad || nodes_[p].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(fn);
  return push(std::move(n));
}

template <typename T>
Tensor<T>& Tape<T>::grad_buffer(int id) {
  Node& n = nodes_[id];
  if (!n.has_grad) {
    n.grad = Tensor<T>(n.value->shape());
    n.has_grad = true;
  }
  return n.grad;
}

template <typename T>
const Tensor<T>& Tape<T>::grad(Var<T> v) const {
  const Node& n = nodes_[v.id];
  if (!n.has_grad) throw ArgumentError("node has no gradient; was backward() called and is it reachable?");
  return n.grad;
}

template <typename T>
void Tape<T>::backward(Var<T> loss) {
  if (backward_done_) throw ArgumentError("backward() already called on this tape");
  if (loss.tape != this) throw ArgumentError("loss belongs to another tape");
  if (value(loss.id).size() != 1) throw ArgumentError("backward() needs a scalar loss, got shape " +
                                                      to_string(value(loss.id).shape()));
  backward_done_ = true;
  grad_buffer(loss.id)[0] = T(1);
  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.has_grad || !n.requires_grad) continue;
    if (n.backward) n.backward(n.grad);
    if (n.param) {
      auto& dst = n.param->grad.vec();
      if (dst.size() != n.grad.size()) n.param->grad = Tensor<T>(n.param->value.shape());
      auto& d = n.param->grad.vec();
      const auto& g = n.grad.vec();
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
    }
  }
}

template class Tape<float>;
template class Tape<double>;

}  // namespace mmbeam::ad
