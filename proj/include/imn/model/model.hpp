#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "imn/model/config.hpp"
#include "imn/tensor/ops.hpp"
#include "imn/tensor/optimizer.hpp"
#include "imn/tensor/tape.hpp"
#include "imn/tensor/tensor.hpp"

namespace imn {

/// The complete transparent decision for one input.
template <typename T>
struct ImnOutput {
  Tensor<T> weights;        // [K, C, L]
  Tensor<T> bias;           // [K]
  Tensor<T> logits;         // [K]
  Tensor<T> probabilities;  // [K] softmax, or [1] sigmoid for the binary formulation
  Formulation formulation = Formulation::binary;

  /// Probability of the positive class: sigmoid(z) for binary, softmax[1] for
  /// categorical models.
  T positive_probability() const;
};

/// Tape variables produced by one forward pass over a batch.
template <typename T>
struct ImnGraph {
  Var<T> latent;   // [N, 64, C, L/4]
  Var<T> weights;  // [N, K, C, L]
  Var<T> bias;     // [N, K]
  Var<T> logits;   // [N, K]
};

template <typename T>
struct ConvBnBlock {
  Tensor<T> kernel;
  Tensor<T> gamma;
  Tensor<T> beta;
  BatchNormState<T> norm;
};

/// Hypernetwork that emits, per input, the weights and bias of a linear readout
/// applied to that same input.
///
/// Two call styles exist for every stage. The non-const overloads bind
/// trainable tensors so backward reaches them, and in `BnMode::train` they
/// update batch-norm running statistics. The const overloads run in eval mode
/// with parameters recorded as constants, so the result depends only on the
/// input sample.
template <typename T>
class BasicImnModel {
 public:
  explicit BasicImnModel(ImnConfig config, std::uint64_t seed = 0);

  const ImnConfig& config() const noexcept { return config_; }
  Formulation formulation() const noexcept { return config_.formulation(); }
  Variant variant() const noexcept { return config_.variant; }

  // signal: [N, C, L]
  ImnGraph<T> forward(Tape<T>& tape, Var<T> signal, BnMode mode);
  ImnGraph<T> forward(Tape<T>& tape, Var<T> signal) const;

  // image: [N, 1, C, L] -> [N, 64, C, L/4]
  Var<T> encode(Tape<T>& tape, Var<T> image, BnMode mode);
  Var<T> encode(Tape<T>& tape, Var<T> image) const;

  // latent -> [N, K, C, L]; uses the transition decoder or the direct
  // projection depending on the variant.
  Var<T> decode_weights(Tape<T>& tape, Var<T> latent, BnMode mode);
  Var<T> decode_weights(Tape<T>& tape, Var<T> latent) const;

  // latent -> [N, K]
  Var<T> generate_bias(Tape<T>& tape, Var<T> latent, BnMode mode);
  Var<T> generate_bias(Tape<T>& tape, Var<T> latent) const;

  /// Eval-mode prediction for one [C, L] signal.
  ImnOutput<T> predict(const Tensor<T>& signal) const;

  /// Eval-mode prediction for many signals, processed `batch_size` at a time.
  /// Results are identical to calling predict() on each signal.
  std::vector<ImnOutput<T>> predict_batch(std::span<const Tensor<T>* const> signals,
                                          std::size_t batch_size = 32) const;

  std::vector<ParamRef<T>> parameters();
  void set_requires_grad(bool flag);
  void zero_grad();

  /// Visits every stored tensor (trainable parameters and running statistics)
  /// in a fixed order. The callback receives (name, tensor, trainable).
  void visit_tensors(const std::function<void(const std::string&, Tensor<T>&, bool)>& fn);
  void visit_tensors(const std::function<void(const std::string&, const Tensor<T>&, bool)>& fn) const;
  void visit_norms(const std::function<void(const std::string&, BatchNormState<T>&)>& fn);
  void visit_norms(const std::function<void(const std::string&, const BatchNormState<T>&)>& fn) const;

  template <typename U>
  BasicImnModel<U> converted() const {
    BasicImnModel<U> out(config_);
    std::vector<const Tensor<T>*> src;
    visit_tensors([&](const std::string&, const Tensor<T>& t, bool) { src.push_back(&t); });
    std::size_t i = 0;
    out.visit_tensors([&](const std::string&, Tensor<U>& t, bool) { t = src[i++]->template cast<U>(); });
    std::vector<std::int64_t> tracked;
    visit_norms([&](const std::string&, const BatchNormState<T>& s) { tracked.push_back(s.batches_tracked); });
    i = 0;
    out.visit_norms([&](const std::string&, BatchNormState<U>& s) { s.batches_tracked = tracked[i++]; });
    return out;
  }

 private:
  template <typename Self>
  static ImnGraph<T> run_forward(Self& self, Tape<T>& tape, Var<T> signal, BnMode mode);
  template <typename Self>
  static Var<T> run_encode(Self& self, Tape<T>& tape, Var<T> image, BnMode mode);
  template <typename Self>
  static Var<T> run_decode(Self& self, Tape<T>& tape, Var<T> latent, BnMode mode);
  template <typename Self>
  static Var<T> run_bias(Self& self, Tape<T>& tape, Var<T> latent, BnMode mode);

  ImnConfig config_;
  std::array<ConvBnBlock<T>, 3> encoder_;
  std::array<ConvBnBlock<T>, 2> decoder_;
  Tensor<T> projection_kernel_;  // [K, 16, kh, kw] (transnet) or [K, 64, 1, 1] (direct)
  Tensor<T> projection_bias_;    // [K]
  Tensor<T> bias_weight_;        // [64, K]
  Tensor<T> bias_bias_;          // [K]
};

using ImnModel = BasicImnModel<float>;

extern template class BasicImnModel<float>;
extern template class BasicImnModel<double>;

}  // namespace imn
