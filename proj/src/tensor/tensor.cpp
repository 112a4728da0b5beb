#include "imn/tensor/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

namespace imn {

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string to_string(const Shape& shape) {
  std::ostringstream out;
  out << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i != 0) out << ", ";
    out << shape[i];
  }
  out << ')';
  return out.str();
}

namespace {

void check_extents(const Shape& shape) {
  for (auto e : shape) {
    if (e == 0) throw ShapeError("tensor extents must be positive, got " + to_string(shape));
  }
}

}  // namespace

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : shape_(std::move(shape)) {
  check_extents(shape_);
  data_.assign(numel(shape_), fill);
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
  check_extents(shape_);
  if (data_.size() != numel(shape_)) {
    throw ShapeError("data length " + std::to_string(data_.size()) + " does not match shape " +
                     to_string(shape_));
  }
}

template <typename T>
std::size_t Tensor<T>::extent(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + to_string(shape_));
  }
  return shape_[axis];
}

template <typename T>
std::size_t Tensor<T>::offset(std::initializer_list<std::size_t> index) const {
  if (index.size() != shape_.size()) {
    throw ShapeError("index of rank " + std::to_string(index.size()) + " into tensor of shape " +
                     to_string(shape_));
  }
  std::size_t flat = 0;
  std::size_t axis = 0;
  for (auto i : index) {
    if (i >= shape_[axis]) {
      throw std::out_of_range("index " + std::to_string(i) + " out of range on axis " +
                              std::to_string(axis) + " of " + to_string(shape_));
    }
    flat = flat * shape_[axis] + i;
    ++axis;
  }
  return flat;
}

template <typename T>
T& Tensor<T>::at(std::size_t i) { return data_[offset({i})]; }
template <typename T>
T& Tensor<T>::at(std::size_t i, std::size_t j) { return data_[offset({i, j})]; }
template <typename T>
T& Tensor<T>::at(std::size_t i, std::size_t j, std::size_t k) { return data_[offset({i, j, k})]; }
template <typename T>
T& Tensor<T>::at(std::size_t i, std::size_t j, std::size_t k, std::size_t l) {
  return data_[offset({i, j, k, l})];
}
template <typename T>
const T& Tensor<T>::at(std::size_t i) const { return data_[offset({i})]; }
template <typename T>
const T& Tensor<T>::at(std::size_t i, std::size_t j) const { return data_[offset({i, j})]; }
template <typename T>
const T& Tensor<T>::at(std::size_t i, std::size_t j, std::size_t k) const {
  return data_[offset({i, j, k})];
}
template <typename T>
const T& Tensor<T>::at(std::size_t i, std::size_t j, std::size_t k, std::size_t l) const {
  return data_[offset({i, j, k, l})];
}

template <typename T>
void Tensor<T>::set_requires_grad(bool flag) {
  requires_grad_ = flag;
  if (flag) {
    grad_.assign(data_.size(), T{0});
  } else {
    grad_.clear();
  }
}

template <typename T>
std::span<T> Tensor<T>::grad() {
  if (!requires_grad_) throw std::logic_error("tensor does not track gradients");
  return grad_;
}

template <typename T>
std::span<const T> Tensor<T>::grad() const {
  if (!requires_grad_) throw std::logic_error("tensor does not track gradients");
  return grad_;
}

template <typename T>
void Tensor<T>::zero_grad() {
  std::fill(grad_.begin(), grad_.end(), T{0});
}

template <typename T>
Tensor<T> Tensor<T>::reshaped(Shape shape) const {
  if (numel(shape) != data_.size()) {
    throw ShapeError("cannot reshape " + to_string(shape_) + " to " + to_string(shape));
  }
  return Tensor(std::move(shape), data_);
}

template <typename T>
bool Tensor<T>::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace imn
