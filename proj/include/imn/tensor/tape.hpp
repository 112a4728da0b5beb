#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <vector>

#include "imn/tensor/tensor.hpp"

namespace imn {

template <typename T>
class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while its tape lives.
template <typename T>
class Var {
 public:
  Var() = default;

  const Tensor<T>& value() const { return tape_->value(*this); }
  const Shape& shape() const { return value().shape(); }
  std::size_t index() const noexcept { return index_; }
  const Tape<T>* tape() const noexcept { return tape_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  friend class Tape<T>;
  Var(const Tape<T>* tape, std::size_t index) : tape_(tape), index_(index) {}

  const Tape<T>* tape_ = nullptr;
  std::size_t index_ = 0;
};

/// Records operations in execution order and replays their backward rules
/// in reverse. Intermediate gradients are scratch space that is reset on every
/// backward call; gradients of bound parameters accumulate into the parameter
/// tensors themselves.
template <typename T>
class Tape {
 public:
  /// Called with the gradient of the recorded output. Must add (never assign)
  /// into the gradients of its inputs.
  using BackwardRule = std::function<void(Tape&, std::span<const T> grad_output)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(Tensor<T> value);

  /// Leaf bound to an external tensor. If the tensor tracks gradients, backward
  /// adds into `param.grad()`; otherwise it behaves as a constant.
  Var<T> parameter(Tensor<T>& param);

  Var<T> record(Tensor<T> value, std::initializer_list<Var<T>> inputs, BackwardRule rule);

  const Tensor<T>& value(Var<T> v) const;
  bool requires_grad(Var<T> v) const;

  /// Gradient buffer of `v` during or after backward. Empty when `v` does not
  /// participate in differentiation.
  std::span<T> grad(Var<T> v);

  void backward(Var<T> loss);

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> value;
    std::vector<T> grad;
    Tensor<T>* bound = nullptr;
    BackwardRule rule;
    bool requires_grad = false;
  };

  std::size_t checked(Var<T> v) const;

  std::vector<Node> nodes_;
};

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace imn
