#pragma once

#include <span>

#include "imn/model/config.hpp"
#include "imn/tensor/ops.hpp"

namespace imn {

template <typename T>
struct LossTerms {
  Var<T> total;
  Var<T> prediction;  // mean cross-entropy or BCE over the batch
  Var<T> sparsity;    // mean |W| over N*K*C*L
};

/// Mean softmax cross-entropy of [N,K] logits plus lambda * mean|W|, with W
/// of shape [N,K,C,L]. K < 2 is rejected.
template <typename T>
LossTerms<T> composite_loss_categorical(Tape<T>& tape, Var<T> logits, std::span<const int> targets, Var<T> weights,
                                        double lambda);

/// Mean BCE-with-logits on [N] or [N,1] logits plus lambda * mean|W|, with W of
/// shape [N,1,C,L].
template <typename T>
LossTerms<T> composite_loss_binary(Tape<T>& tape, Var<T> logits, std::span<const int> targets, Var<T> weights,
                                   double lambda);

template <typename T>
LossTerms<T> composite_loss(Tape<T>& tape, Formulation formulation, Var<T> logits, std::span<const int> targets,
                            Var<T> weights, double lambda);

}  // namespace imn
