#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "imn/attribution/ablation.hpp"
#include "imn/attribution/attribution.hpp"

namespace imn {

inline constexpr int kAttributionSchemaVersion = 1;

/// {"schema_version", "record_id", "k", "window", "stride", "num_segments",
///  "segments": [{"lead", "start", "value"}], "top_k": [{"lead", "segment", "start", "value"}],
///  "max_abs", "logit", "bias", "probability"}
/// "k" is the string "scalar" for binary models and the class index otherwise.
nlohmann::json attribution_export(const ImpactMap& map, const SegmentGrid& grid,
                                  const std::vector<Contributor>& top_k);

nlohmann::json ablation_json(const AblationResult& result);

/// C rows of T comma-separated contributions. With `normalized`, each value is
/// divided by the grid's max |C| (all zeros stay zero).
std::string heatmap_csv(const SegmentGrid& grid, bool normalized = false);

void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace imn
