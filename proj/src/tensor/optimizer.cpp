#include "imn/tensor/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace imn {

template <typename T>
Adam<T>::Adam(AdamOptions options) : options_(options) {
  if (options_.learning_rate < 0 || options_.beta1 < 0 || options_.beta1 >= 1 || options_.beta2 < 0 ||
      options_.beta2 >= 1 || options_.epsilon <= 0) {
    throw std::invalid_argument("adam: invalid hyper-parameters");
  }
}

template <typename T>
void Adam<T>::step(std::span<const ParamRef<T>> params) {
  if (moments_.empty()) {
    moments_.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      moments_[i].first.assign(params[i].tensor->size(), 0.0);
      moments_[i].second.assign(params[i].tensor->size(), 0.0);
    }
  }
  if (moments_.size() != params.size()) {
    throw std::invalid_argument("adam: parameter list changed between steps");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].tensor->size() != moments_[i].first.size()) {
      throw ShapeError("adam: parameter '" + params[i].name + "' changed size between steps");
    }
    for (auto g : params[i].tensor->grad()) {
      if (!std::isfinite(g)) {
        throw NumericError("adam: non-finite gradient in parameter '" + params[i].name + "' at step " +
                           std::to_string(steps_ + 1));
      }
    }
  }

  ++steps_;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double correction1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double correction2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto values = params[i].tensor->data();
    auto grads = params[i].tensor->grad();
    auto& m = moments_[i];
    for (std::size_t j = 0; j < values.size(); ++j) {
      const double g = grads[j];
      m.first[j] = b1 * m.first[j] + (1.0 - b1) * g;
      m.second[j] = b2 * m.second[j] + (1.0 - b2) * g * g;
      const double m_hat = m.first[j] / correction1;
      const double v_hat = m.second[j] / correction2;
      values[j] = static_cast<T>(values[j] - options_.learning_rate * m_hat / (std::sqrt(v_hat) + options_.epsilon));
    }
  }
}

template class Adam<float>;
template class Adam<double>;

}  // namespace imn
