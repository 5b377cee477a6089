#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <unordered_map>
#include <vector>

#include "mmbeam/ad/tensor.hpp"

namespace mmbeam::ad {

template <typename T>
class Tape;

/// Learnable array with its gradient accumulator.
template <typename T>
struct Parameter {
  Tensor<T> value;
  Tensor<T> grad;

  explicit Parameter(Tensor<T> init = {}) : value(std::move(init)), grad(value.shape()) {}
  void zero_grad() { grad.fill(T(0)); }
};

/// Handle to a node recorded on a tape.
template <typename T>
struct Var {
  Tape<T>* tape = nullptr;
  int id = -1;

  bool valid() const noexcept { return tape != nullptr && id >= 0; }
  const Tensor<T>& value() const;
  const Shape& shape() const { return value().shape(); }
  int dim(int axis) const { return value().dim(axis); }
};

/// Reverse-mode record of one forward pass. Nodes are appended in execution
/// order, which is already a topological order, so backward walks them in
/// reverse. A tape is used for exactly one backward call.
template <typename T>
class Tape {
 public:
  /// Receives the gradient flowing into the node's output.
  using BackwardFn = std::function<void(const Tensor<T>& grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(Tensor<T> value);
  /// A free input whose gradient can be read back with grad().
  Var<T> variable(Tensor<T> value);
  /// Gradients for parameters are added into Parameter::grad by backward().
  Var<T> parameter(Parameter<T>& p);

  /// Appends an op result. The node requires grad if any parent does; the
  /// value must be finite.
  Var<T> record(Tensor<T> value, const std::vector<int>& parents, BackwardFn fn);

  void backward(Var<T> loss);

  const Tensor<T>& value(int id) const { return *nodes_[id].value; }
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }
  /// Gradient buffer of a node, zero-initialised on first access.
  Tensor<T>& grad_buffer(int id);
  const Tensor<T>& grad(Var<T> v) const;

  std::size_t size() const noexcept { return nodes_.size(); }

  /// Multiply-accumulate tally of the ops recorded so far.
  void add_macs(std::uint64_t n) noexcept { macs_ += n; }
  std::uint64_t macs() const noexcept { return macs_; }

  /// When false, ops skip closure capture (pure inference).
  bool grad_enabled() const noexcept { return grad_enabled_; }
  void set_grad_enabled(bool on) noexcept { grad_enabled_ = on; }

 private:
  struct Node {
    Tensor<T> own;
    const Tensor<T>* value = nullptr;
    Parameter<T>* param = nullptr;
    Tensor<T> grad;
    bool has_grad = false;
    bool requires_grad = false;
    BackwardFn backward;
  };

  Var<T> push(Node node);

  std::deque<Node> nodes_;
  std::unordered_map<const Parameter<T>*, int> param_nodes_;
  std::uint64_t macs_ = 0;
  bool backward_done_ = false;
  bool grad_enabled_ = true;
};

template <typename T>
const Tensor<T>& Var<T>::value() const {
  return tape->value(id);
}

}  // namespace mmbeam::ad
