#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "imn/model/model.hpp"

namespace imn {

class AttributionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// I = W_k * X for one record and class, with the bias and logit needed to
/// check that sum(I) + b_k reproduces z_k.
struct ImpactMap {
  Tensor<float> values;  // [C, L]
  std::size_t k = 0;
  Formulation formulation = Formulation::binary;
  std::string record_id;
  double bias = 0.0;
  double logit = 0.0;
  double probability = 0.0;  // of class k (sigmoid for binary)

  std::size_t num_leads() const { return values.extent(0); }
  std::size_t length() const { return values.extent(1); }
  /// Sum of every entry, accumulated in double.
  double total() const;
};

/// `output` must come from an eval-mode forward of exactly `signal`. Binary
/// models only accept k = 0.
ImpactMap impact_map(const Tensor<float>& signal, const ImnOutput<float>& output, std::size_t k,
                     std::string record_id = {});

/// Windowed signed sums C[c][tau] = sum_{j < window} I(c, tau*stride + j) for
/// the T = floor((L - window) / stride) + 1 windows fully inside the signal.
struct SegmentGrid {
  std::size_t window = 0;
  std::size_t stride = 0;
  std::size_t num_leads = 0;
  std::vector<std::size_t> starts;   // T entries
  std::vector<double> contributions;  // [C, T] row-major

  std::size_t num_segments() const noexcept { return starts.size(); }
  double at(std::size_t lead, std::size_t segment) const { return contributions[lead * starts.size() + segment]; }
  double max_abs() const;
};

/// T for a signal of `length` samples; throws AttributionError when the window
/// does not fit or window/stride are zero.
std::size_t segment_count(std::size_t length, std::size_t window, std::size_t stride);

SegmentGrid aggregate_segments(const Tensor<float>& impact, std::size_t window, std::size_t stride);
SegmentGrid aggregate_segments(const ImpactMap& map, std::size_t window, std::size_t stride);

enum class RankSign { positive, negative, absolute };

std::string_view to_string(RankSign sign);
RankSign parse_rank_sign(std::string_view text);

struct Contributor {
  std::size_t lead = 0;
  std::size_t segment = 0;
  std::size_t start = 0;
  double value = 0.0;
};

/// Cells ranked largest first (positive), most negative first (negative) or
/// by magnitude (absolute). Equal keys keep (lead, segment) ascending. Returns
/// min(k, C*T) entries.
std::vector<Contributor> top_k_contributors(const SegmentGrid& grid, std::size_t k, RankSign sign);

}  // namespace imn
