#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "imn/attribution/attribution.hpp"
#include "imn/data/record.hpp"

namespace imn {

/// `rerun` regenerates W and b from the masked signal; `frozen` keeps the
/// original W and b and only re-evaluates the linear readout.
enum class AblationMode { rerun, frozen };

std::string_view to_string(AblationMode mode);
AblationMode parse_ablation_mode(std::string_view text);

/// Samples [begin, end) of one lead, or of every lead when `lead` is empty.
struct SegmentMask {
  std::optional<std::size_t> lead;
  std::size_t begin = 0;
  std::size_t end = 0;
};

struct AblationRequest {
  std::vector<std::size_t> lead_mask;  // whole leads to zero
  std::vector<SegmentMask> segments;   // unioned with the lead mask
  AblationMode mode = AblationMode::rerun;
  std::optional<std::size_t> k;        // class to report; defaults to the positive class
};

struct AblationResult {
  std::size_t k = 0;
  double p_original = 0.0;
  double p_ablated = 0.0;
  double delta = 0.0;          // p_ablated - p_original
  double logit_original = 0.0;
  double logit_ablated = 0.0;
  double linear_delta = 0.0;   // -sum of the original impact over masked samples
  std::size_t masked_samples = 0;
  AblationMode mode = AblationMode::rerun;
  ImpactMap ablated_map;       // impact of the masked signal under the W actually used
  std::vector<std::string> warnings;
};

/// Class reported by default: 0 for binary models, 1 for categorical ones.
std::size_t default_class(const ImnModel& model);

/// Flattened [C*L] mask of the union of all selections. Throws
/// AttributionError for leads or ranges outside the record.
std::vector<unsigned char> build_mask(const AblationRequest& request, std::size_t leads, std::size_t length);

/// Zeroes the selected samples of the normalized record and reports both
/// probabilities. An empty selection returns the original prediction
/// unchanged, with a warning.
AblationResult ablate(const ImnModel& model, const EcgRecord& record, const AblationRequest& request);

}  // namespace imn
