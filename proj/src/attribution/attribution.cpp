#include "imn/attribution/attribution.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace imn {

double ImpactMap::total() const {
  double s = 0.0;
  for (float v : values.data()) s += static_cast<double>(v);
  return s;
}

ImpactMap impact_map(const Tensor<float>& signal, const ImnOutput<float>& output, std::size_t k,
                     std::string record_id) {
  const auto& w = output.weights.shape();
  if (signal.rank() != 2 || w.size() != 3 || w[1] != signal.extent(0) || w[2] != signal.extent(1)) {
    throw ShapeError("impact_map: weights " + to_string(w) + " do not match signal " + to_string(signal.shape()));
  }
  if (k >= w[0]) {
    throw AttributionError("class index " + std::to_string(k) + " out of range for a model with " +
                           std::to_string(w[0]) + " output(s)");
  }
  const std::size_t leads = w[1], length = w[2], plane = leads * length;
  ImpactMap map;
  map.values = Tensor<float>({leads, length});
  map.k = k;
  map.formulation = output.formulation;
  map.record_id = std::move(record_id);
  map.bias = static_cast<double>(output.bias[k]);
  map.logit = static_cast<double>(output.logits[k]);
  map.probability = static_cast<double>(output.probabilities[output.formulation == Formulation::binary ? 0 : k]);
  const float* wk = output.weights.data().data() + k * plane;
  const float* x = signal.data().data();
  float* out = map.values.data().data();
  for (std::size_t i = 0; i < plane; ++i) out[i] = wk[i] * x[i];
  return map;
}

double SegmentGrid::max_abs() const {
  double m = 0.0;
  for (double v : contributions) m = std::max(m, std::abs(v));
  return m;
}

std::size_t segment_count(std::size_t length, std::size_t window, std::size_t stride) {
  if (window == 0) throw AttributionError("window must be at least 1 sample");
  if (stride == 0) throw AttributionError("stride must be at least 1 sample");
  if (window > length) {
    throw AttributionError("window " + std::to_string(window) + " exceeds signal length " + std::to_string(length));
  }
  return (length - window) / stride + 1;
}

SegmentGrid aggregate_segments(const Tensor<float>& impact, std::size_t window, std::size_t stride) {
  if (impact.rank() != 2) throw ShapeError("aggregate_segments: impact must be (C, L), got " + to_string(impact.shape()));
  const std::size_t leads = impact.extent(0), length = impact.extent(1);
  const std::size_t segments = segment_count(length, window, stride);
  SegmentGrid grid;
  grid.window = window;
  grid.stride = stride;
  grid.num_leads = leads;
  grid.starts.resize(segments);
  for (std::size_t tau = 0; tau < segments; ++tau) grid.starts[tau] = tau * stride;
  grid.contributions.assign(leads * segments, 0.0);
  for (std::size_t c = 0; c < leads; ++c) {
    const float* row = impact.data().data() + c * length;
    for (std::size_t tau = 0; tau < segments; ++tau) {
      double s = 0.0;
      for (std::size_t j = 0; j < window; ++j) s += static_cast<double>(row[tau * stride + j]);
      grid.contributions[c * segments + tau] = s;
    }
  }
  return grid;
}

SegmentGrid aggregate_segments(const ImpactMap& map, std::size_t window, std::size_t stride) {
  return aggregate_segments(map.values, window, stride);
}

std::string_view to_string(RankSign sign) {
  switch (sign) {
    case RankSign::positive: return "positive";
    case RankSign::negative: return "negative";
    case RankSign::absolute: return "absolute";
  }
  return "?";
}

RankSign parse_rank_sign(std::string_view text) {
  if (text == "positive") return RankSign::positive;
  if (text == "negative") return RankSign::negative;
  if (text == "absolute") return RankSign::absolute;
  throw AttributionError("unknown ranking sign '" + std::string(text) + "' (expected positive, negative or absolute)");
}

std::vector<Contributor> top_k_contributors(const SegmentGrid& grid, std::size_t k, RankSign sign) {
  if (k == 0) throw AttributionError("top-k needs k >= 1");
  const std::size_t segments = grid.num_segments();
  std::vector<Contributor> cells;
  cells.reserve(grid.contributions.size());
  for (std::size_t c = 0; c < grid.num_leads; ++c) {
    for (std::size_t tau = 0; tau < segments; ++tau) cells.push_back({c, tau, grid.starts[tau], grid.at(c, tau)});
  }
  auto key = [sign](double v) {
    switch (sign) {
      case RankSign::positive: return v;
      case RankSign::negative: return -v;
      case RankSign::absolute: return std::abs(v);
    }
    return v;
  };
  // cells are already in (lead, segment) order, so a stable sort keeps ties in that order
  std::stable_sort(cells.begin(), cells.end(),
                   [&](const Contributor& a, const Contributor& b) { return key(a.value) > key(b.value); });
  cells.resize(std::min(k, cells.size()));
  return cells;
}

}  // namespace imn
