#include "imn/training/loss.hpp"

#include <stdexcept>
#include <string>

namespace imn {

namespace {

template <typename T>
LossTerms<T> combine(Tape<T>& tape, Var<T> prediction, Var<T> weights, double lambda) {
  if (!(lambda >= 0.0)) throw std::invalid_argument("lambda must be non-negative");
  auto sparsity = mean_abs(tape, weights);
  auto total = add(tape, prediction, scale(tape, sparsity, static_cast<T>(lambda)));
  return {total, prediction, sparsity};
}

void check_weights(const Shape& w, std::size_t rows, std::size_t heads, const char* op) {
  if (w.size() != 4 || w[0] != rows || w[1] != heads) {
    throw ShapeError(std::string(op) + ": weights " + to_string(w) + " do not match " + std::to_string(rows) +
                     " rows with " + std::to_string(heads) + " heads");
  }
}

}  // namespace

template <typename T>
LossTerms<T> composite_loss_categorical(Tape<T>& tape, Var<T> logits, std::span<const int> targets, Var<T> weights,
                                        double lambda) {
  const auto& z = logits.shape();
  if (z.size() != 2) throw ShapeError("composite_loss_categorical: logits must be [N, K], got " + to_string(z));
  if (z[1] < 2) throw std::invalid_argument("composite_loss_categorical: needs K >= 2 heads, got " + std::to_string(z[1]));
  check_weights(weights.shape(), z[0], z[1], "composite_loss_categorical");
  return combine(tape, cross_entropy(tape, logits, targets), weights, lambda);
}

template <typename T>
LossTerms<T> composite_loss_binary(Tape<T>& tape, Var<T> logits, std::span<const int> targets, Var<T> weights,
                                   double lambda) {
  const auto& z = logits.shape();
  if (z.empty() || z.size() > 2 || (z.size() == 2 && z[1] != 1)) {
    throw ShapeError("composite_loss_binary: logits must be [N] or [N, 1], got " + to_string(z));
  }
  check_weights(weights.shape(), z[0], 1, "composite_loss_binary");
  return combine(tape, bce_with_logits(tape, logits, targets), weights, lambda);
}

template <typename T>
LossTerms<T> composite_loss(Tape<T>& tape, Formulation formulation, Var<T> logits, std::span<const int> targets,
                            Var<T> weights, double lambda) {
  return formulation == Formulation::binary ? composite_loss_binary(tape, logits, targets, weights, lambda)
                                            : composite_loss_categorical(tape, logits, targets, weights, lambda);
}

#define IMN_INSTANTIATE_LOSS(T)                                                                                   \
  template LossTerms<T> composite_loss_categorical(Tape<T>&, Var<T>, std::span<const int>, Var<T>, double);      \
  template LossTerms<T> composite_loss_binary(Tape<T>&, Var<T>, std::span<const int>, Var<T>, double);           \
  template LossTerms<T> composite_loss(Tape<T>&, Formulation, Var<T>, std::span<const int>, Var<T>, double);

IMN_INSTANTIATE_LOSS(float)
IMN_INSTANTIATE_LOSS(double)

}  // namespace imn
