#include "imn/attribution/export.hpp"

#include <fstream>
#include <sstream>

namespace imn {

using nlohmann::json;

nlohmann::json attribution_export(const ImpactMap& map, const SegmentGrid& grid,
                                  const std::vector<Contributor>& top_k) {
  json segments = json::array();
  for (std::size_t c = 0; c < grid.num_leads; ++c) {
    for (std::size_t tau = 0; tau < grid.num_segments(); ++tau) {
      segments.push_back({{"lead", c}, {"start", grid.starts[tau]}, {"value", grid.at(c, tau)}});
    }
  }
  json top = json::array();
  for (const auto& t : top_k) {
    top.push_back({{"lead", t.lead}, {"segment", t.segment}, {"start", t.start}, {"value", t.value}});
  }
  json k = map.formulation == Formulation::binary ? json("scalar") : json(map.k);
  return json{{"schema_version", kAttributionSchemaVersion},
              {"record_id", map.record_id},
              {"k", k},
              {"window", grid.window},
              {"stride", grid.stride},
              {"num_leads", grid.num_leads},
              {"num_segments", grid.num_segments()},
              {"segments", std::move(segments)},
              {"top_k", std::move(top)},
              {"max_abs", grid.max_abs()},
              {"logit", map.logit},
              {"bias", map.bias},
              {"probability", map.probability}};
}

nlohmann::json ablation_json(const AblationResult& r) {
  json j = {{"k", r.k},
            {"mode", std::string(to_string(r.mode))},
            {"p_original", r.p_original},
            {"p_ablated", r.p_ablated},
            {"delta", r.delta},
            {"logit_original", r.logit_original},
            {"logit_ablated", r.logit_ablated},
            {"linear_delta", r.linear_delta},
            {"masked_samples", r.masked_samples},
            {"warnings", r.warnings}};
  return j;
}

std::string heatmap_csv(const SegmentGrid& grid, bool normalized) {
  const double scale = normalized && grid.max_abs() > 0.0 ? 1.0 / grid.max_abs() : 1.0;
  std::ostringstream out;
  out.precision(17);
  for (std::size_t c = 0; c < grid.num_leads; ++c) {
    for (std::size_t tau = 0; tau < grid.num_segments(); ++tau) {
      if (tau) out << ',';
      out << grid.at(c, tau) * scale;
    }
    out << '\n';
  }
  return out.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

}  // namespace imn
