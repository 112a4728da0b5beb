#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "imn/tensor/tensor.hpp"

namespace imn {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The five aggregated diagnostic superclasses.
enum class Superclass : std::uint8_t { NORM = 0, MI = 1, STTC = 2, CD = 3, HYP = 4 };

inline constexpr std::array<Superclass, 5> kAllSuperclasses = {Superclass::NORM, Superclass::MI, Superclass::STTC,
                                                               Superclass::CD, Superclass::HYP};

std::string_view to_string(Superclass s);

/// Accepts the canonical upper-case tokens; throws DataError quoting the token otherwise.
Superclass parse_superclass(std::string_view token);

class LabelSet {
 public:
  LabelSet() = default;
  LabelSet(std::initializer_list<Superclass> labels);
  static LabelSet from_bits(std::uint8_t bits);

  bool contains(Superclass s) const noexcept { return (bits_ >> static_cast<unsigned>(s)) & 1U; }
  void insert(Superclass s) noexcept { bits_ |= static_cast<std::uint8_t>(1U << static_cast<unsigned>(s)); }
  bool empty() const noexcept { return bits_ == 0; }
  std::uint8_t bits() const noexcept { return bits_; }

  /// Tokens in canonical order (NORM, MI, STTC, CD, HYP).
  std::vector<std::string> tokens() const;
  static LabelSet parse(const std::vector<std::string>& tokens);

  friend bool operator==(LabelSet, LabelSet) = default;

 private:
  std::uint8_t bits_ = 0;
};

struct EcgRecord {
  std::string id;
  Tensor<float> signal;  // [C, L], row-major by lead
  double fs = 500.0;
  LabelSet labels;
  int fold = 0;  // 1..10
  bool normalized = false;
  std::string notes;

  std::size_t num_leads() const { return signal.extent(0); }
  std::size_t length() const { return signal.extent(1); }

  /// Throws DataError if the signal is not [C, L], contains non-finite
  /// values, or the fold is outside 1..10.
  void validate() const;
};

inline constexpr double kZscoreEpsilon = 1e-8;

/// Per-lead standardization using that record's own lead mean and population
/// standard deviation: (x - mu) / (sigma + eps). Fails on an already
/// normalized record.
EcgRecord zscore(const EcgRecord& record, double eps = kZscoreEpsilon);

}  // namespace imn
