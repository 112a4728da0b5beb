#include "imn/tensor/tape.hpp"

#include <algorithm>
#include <string>

namespace imn {

template <typename T>
std::size_t Tape<T>::checked(Var<T> v) const {
  if (v.tape_ != this) throw std::logic_error("variable belongs to a different tape");
  if (v.index_ >= nodes_.size()) throw std::logic_error("variable index out of range");
  return v.index_;
}

template <typename T>
Var<T> Tape<T>::constant(Tensor<T> value) {
  Node node;
  node.value = std::move(value);
  nodes_.push_back(std::move(node));
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Tape<T>::parameter(Tensor<T>& param) {
  Node node;
  node.value = Tensor<T>(param.shape(), param.storage());
  if (param.requires_grad()) {
    node.bound = &param;
    node.requires_grad = true;
  }
  nodes_.push_back(std::move(node));
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Tape<T>::record(Tensor<T> value, std::initializer_list<Var<T>> inputs, BackwardRule rule) {
  bool needs_grad = false;
  for (auto in : inputs) needs_grad = needs_grad || nodes_[checked(in)].requires_grad;
  Node node;
  node.value = std::move(value);
  node.requires_grad = needs_grad;
  if (needs_grad) node.rule = std::move(rule);
  nodes_.push_back(std::move(node));
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
const Tensor<T>& Tape<T>::value(Var<T> v) const {
  return nodes_[checked(v)].value;
}

template <typename T>
bool Tape<T>::requires_grad(Var<T> v) const {
  return nodes_[checked(v)].requires_grad;
}

template <typename T>
std::span<T> Tape<T>::grad(Var<T> v) {
  return nodes_[checked(v)].grad;
}

template <typename T>
void Tape<T>::backward(Var<T> loss) {
  const std::size_t root = checked(loss);
  if (nodes_[root].value.size() != 1) {
    throw ShapeError("backward requires a scalar loss, got shape " + to_string(nodes_[root].value.shape()));
  }
  if (!nodes_[root].requires_grad) {
    throw std::logic_error("loss is detached: no gradient-tracking tensor contributes to it");
  }
  for (std::size_t i = 0; i <= root; ++i) {
    auto& node = nodes_[i];
    if (node.requires_grad) node.grad.assign(node.value.size(), T{0});
  }
  nodes_[root].grad[0] = T{1};

  for (std::size_t i = root + 1; i-- > 0;) {
    auto& node = nodes_[i];
    if (!node.requires_grad || !node.rule) continue;
    // Moving the buffer out keeps it alive for the rule and frees it afterwards;
    // inputs always have smaller indices so nothing else aliases it.
    std::vector<T> grad_out = std::move(node.grad);
    node.rule(*this, grad_out);
    node.grad.clear();
  }

  for (std::size_t i = 0; i <= root; ++i) {
    auto& node = nodes_[i];
    if (node.bound == nullptr) continue;
    auto target = node.bound->grad();
    if (target.size() != node.grad.size()) {
      throw ShapeError("bound parameter changed shape during differentiation");
    }
    for (std::size_t j = 0; j < target.size(); ++j) target[j] += node.grad[j];
  }
}

template class Tape<float>;
template class Tape<double>;

}  // namespace imn
