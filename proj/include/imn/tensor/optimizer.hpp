#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "imn/tensor/tensor.hpp"

namespace imn {

/// Named reference to a trainable tensor owned elsewhere (usually by a model).
template <typename T>
struct ParamRef {
  std::string name;
  Tensor<T>* tensor = nullptr;
};

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adaptive-moment optimizer with bias correction. Moments are kept in double
/// precision regardless of the parameter type.
template <typename T>
class Adam {
 public:
  explicit Adam(AdamOptions options = {});

  /// Applies one update from each parameter's accumulated gradient. The
  /// parameter list must be the same (same order and shapes) on every call.
  /// Throws NumericError, naming the parameter, if any gradient is not finite.
  void step(std::span<const ParamRef<T>> params);

  std::int64_t step_count() const noexcept { return steps_; }
  const AdamOptions& options() const noexcept { return options_; }
  void set_learning_rate(double lr) { options_.learning_rate = lr; }

 private:
  struct Moments {
    std::vector<double> first;
    std::vector<double> second;
  };

  AdamOptions options_;
  std::int64_t steps_ = 0;
  std::vector<Moments> moments_;
};

extern template class Adam<float>;
extern template class Adam<double>;

}  // namespace imn
