#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>

#include "imn/tensor/tape.hpp"
#include "imn/tensor/tensor.hpp"

// Differentiable operations used by the IMN. Every op takes its inputs as tape
// variables, computes the forward value eagerly and records a backward rule.
// Layouts are NCHW; "width" is the temporal axis throughout.

namespace imn {

struct Padding2d {
  std::size_t height = 0;
  std::size_t width = 0;
};

/// Zero padding that preserves spatial extents for odd kernel sizes.
inline Padding2d same_padding(std::size_t kernel_height, std::size_t kernel_width) {
  return {(kernel_height - 1) / 2, (kernel_width - 1) / 2};
}

enum class BnMode { train, eval };

/// Running statistics of one batch-norm layer.
template <typename T>
struct BatchNormState {
  explicit BatchNormState(std::size_t channels = 1)
      : running_mean(Shape{channels}, T{0}), running_var(Shape{channels}, T{1}) {}

  Tensor<T> running_mean;
  Tensor<T> running_var;
  std::int64_t batches_tracked = 0;
};

inline constexpr double kBatchNormMomentum = 0.1;
inline constexpr double kBatchNormEpsilon = 1e-5;

// input [N,Cin,H,W], kernel [Cout,Cin,kh,kw], bias [Cout] -> [N,Cout,H',W']
template <typename T>
Var<T> conv2d(Tape<T>& tape, Var<T> input, Var<T> kernel, std::optional<Var<T>> bias, Padding2d padding);

// Train mode normalizes with batch statistics and updates `state`; eval mode
// reads `state` and fails if it was never updated.
template <typename T>
Var<T> batchnorm2d(Tape<T>& tape, Var<T> input, Var<T> gamma, Var<T> beta, BatchNormState<T>& state,
                   BnMode mode, double momentum = kBatchNormMomentum, double eps = kBatchNormEpsilon);

template <typename T>
Var<T> batchnorm2d_eval(Tape<T>& tape, Var<T> input, Var<T> gamma, Var<T> beta,
                        const BatchNormState<T>& state, double eps = kBatchNormEpsilon);

/// x * Phi(x) using the exact erf form.
template <typename T>
Var<T> gelu(Tape<T>& tape, Var<T> input);

/// Temporal max pooling with kernel and stride (1, pool_width). The first
/// maximum in each window receives the gradient.
template <typename T>
Var<T> maxpool2d(Tape<T>& tape, Var<T> input, std::size_t pool_width);

/// Nearest-neighbour temporal upsampling by (1, factor).
template <typename T>
Var<T> upsample_nearest(Tape<T>& tape, Var<T> input, std::size_t factor);

// input [N,D], weight [D,K], bias [K] -> [N,K]
template <typename T>
Var<T> linear(Tape<T>& tape, Var<T> input, Var<T> weight, Var<T> bias);

// [N,C,H,W] -> [N,C]
template <typename T>
Var<T> global_avg_pool(Tape<T>& tape, Var<T> input);

// Row-wise softmax over [N,K].
template <typename T>
Var<T> softmax(Tape<T>& tape, Var<T> logits);

template <typename T>
Var<T> sigmoid(Tape<T>& tape, Var<T> input);

template <typename T>
Var<T> reshape(Tape<T>& tape, Var<T> input, Shape shape);

/// z[n,k] = sum_{c,t} weights[n,k,c,t] * signal[n,c,t] + bias[n,k]
template <typename T>
Var<T> readout(Tape<T>& tape, Var<T> weights, Var<T> signal, Var<T> bias);

template <typename T>
Var<T> sum(Tape<T>& tape, Var<T> input);

template <typename T>
Var<T> mul(Tape<T>& tape, Var<T> a, Var<T> b);

template <typename T>
Var<T> add(Tape<T>& tape, Var<T> a, Var<T> b);

template <typename T>
Var<T> scale(Tape<T>& tape, Var<T> input, T factor);

/// Mean absolute value over every element.
template <typename T>
Var<T> mean_abs(Tape<T>& tape, Var<T> input);

/// Mean softmax cross-entropy of [N,K] logits against class indices.
template <typename T>
Var<T> cross_entropy(Tape<T>& tape, Var<T> logits, std::span<const int> targets);

/// Mean binary cross-entropy on N logits (shape [N] or [N,1]), targets in {0,1}.
template <typename T>
Var<T> bce_with_logits(Tape<T>& tape, Var<T> logits, std::span<const int> targets);

/// 1 / (1 + exp(-z)) without overflow for large |z|.
template <typename T>
T stable_sigmoid(T z) {
  if (z >= T{0}) {
    const T e = std::exp(-z);
    return T{1} / (T{1} + e);
  }
  const T e = std::exp(z);
  return e / (T{1} + e);
}

}  // namespace imn
