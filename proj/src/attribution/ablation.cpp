#include "imn/attribution/ablation.hpp"

#include <cmath>

namespace imn {

namespace {

std::vector<double> readout_logits(const ImnOutput<float>& out, const Tensor<float>& signal) {
  const std::size_t heads = out.weights.extent(0), plane = signal.size();
  std::vector<double> z(heads);
  const float* x = signal.data().data();
  for (std::size_t k = 0; k < heads; ++k) {
    const float* w = out.weights.data().data() + k * plane;
    double s = 0.0;
    for (std::size_t i = 0; i < plane; ++i) s += static_cast<double>(w[i]) * static_cast<double>(x[i]);
    z[k] = s + static_cast<double>(out.bias[k]);
  }
  return z;
}

double probability_of(const std::vector<double>& logits, std::size_t k, Formulation formulation) {
  if (formulation == Formulation::binary) return stable_sigmoid(logits[0]);
  double top = logits[0];
  for (double z : logits) top = std::max(top, z);
  double total = 0.0;
  for (double z : logits) total += std::exp(z - top);
  return std::exp(logits[k] - top) / total;
}

}  // namespace

std::string_view to_string(AblationMode mode) { return mode == AblationMode::rerun ? "rerun" : "frozen"; }

AblationMode parse_ablation_mode(std::string_view text) {
  if (text == "rerun") return AblationMode::rerun;
  if (text == "frozen") return AblationMode::frozen;
  throw AttributionError("unknown ablation mode '" + std::string(text) + "' (expected rerun or frozen)");
}

std::size_t default_class(const ImnModel& model) { return model.formulation() == Formulation::binary ? 0 : 1; }

std::vector<unsigned char> build_mask(const AblationRequest& request, std::size_t leads, std::size_t length) {
  std::vector<unsigned char> mask(leads * length, 0);
  for (auto lead : request.lead_mask) {
    if (lead >= leads) {
      throw AttributionError("lead " + std::to_string(lead) + " outside [0, " + std::to_string(leads) + ")");
    }
    std::fill_n(mask.begin() + static_cast<std::ptrdiff_t>(lead * length), length, 1);
  }
  for (const auto& s : request.segments) {
    if (s.begin >= s.end || s.end > length) {
      throw AttributionError("segment [" + std::to_string(s.begin) + ", " + std::to_string(s.end) +
                             ") is empty or outside [0, " + std::to_string(length) + ")");
    }
    if (s.lead && *s.lead >= leads) {
      throw AttributionError("segment lead " + std::to_string(*s.lead) + " outside [0, " + std::to_string(leads) + ")");
    }
    const std::size_t first = s.lead ? *s.lead : 0, last = s.lead ? *s.lead + 1 : leads;
    for (std::size_t c = first; c < last; ++c) {
      std::fill(mask.begin() + static_cast<std::ptrdiff_t>(c * length + s.begin),
                mask.begin() + static_cast<std::ptrdiff_t>(c * length + s.end), 1);
    }
  }
  return mask;
}

AblationResult ablate(const ImnModel& model, const EcgRecord& record, const AblationRequest& request) {
  if (!record.normalized) throw AttributionError("record '" + record.id + "' must be normalized before ablation");
  const auto& cfg = model.config();
  const std::size_t leads = record.num_leads(), length = record.length();
  if (leads != cfg.num_leads || length != cfg.signal_length) {
    throw AttributionError("record '" + record.id + "' has shape " + to_string(record.signal.shape()) +
                           " but the model expects (" + std::to_string(cfg.num_leads) + ", " +
                           std::to_string(cfg.signal_length) + ")");
  }
  const std::size_t k = request.k.value_or(default_class(model));
  const auto mask = build_mask(request, leads, length);

  const ImnOutput<float> original = model.predict(record.signal);
  const ImpactMap original_map = impact_map(record.signal, original, k, record.id);

  AblationResult result;
  result.k = k;
  result.mode = request.mode;
  result.p_original = original_map.probability;
  result.logit_original = original_map.logit;

  double masked_impact = 0.0;
  const float* impact = original_map.values.data().data();
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) {
      masked_impact += static_cast<double>(impact[i]);
      ++result.masked_samples;
    }
  }
  result.linear_delta = -masked_impact;

  if (result.masked_samples == 0) {
    result.warnings.emplace_back("empty mask: nothing was ablated");
    result.p_ablated = result.p_original;
    result.logit_ablated = result.logit_original;
    result.ablated_map = original_map;
    return result;
  }

  Tensor<float> masked = record.signal;
  auto data = masked.data();
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) data[i] = 0.0f;
  }

  if (request.mode == AblationMode::rerun) {
    const ImnOutput<float> rerun = model.predict(masked);
    result.ablated_map = impact_map(masked, rerun, k, record.id);
    result.p_ablated = result.ablated_map.probability;
    result.logit_ablated = result.ablated_map.logit;
  } else {
    const auto before = readout_logits(original, record.signal);
    const auto after = readout_logits(original, masked);
    std::vector<double> shifted(original.logits.size());
    for (std::size_t j = 0; j < shifted.size(); ++j) {
      shifted[j] = static_cast<double>(original.logits[j]) + (after[j] - before[j]);
    }
    result.logit_ablated = shifted[k];
    result.p_ablated = probability_of(shifted, k, original.formulation);
    result.ablated_map = impact_map(masked, original, k, record.id);
    result.ablated_map.logit = shifted[k];
    result.ablated_map.probability = result.p_ablated;
  }
  result.delta = result.p_ablated - result.p_original;
  return result;
}

}  // namespace imn
