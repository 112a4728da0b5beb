#include "imn/service/api.hpp"

#include <set>
#include <utility>

#include "imn/attribution/ablation.hpp"
#include "imn/attribution/export.hpp"
#include "imn/data/io.hpp"
#include "imn/model/checkpoint.hpp"

namespace imn {

using nlohmann::json;

std::string_view to_string(ApiErrorCode code) {
  switch (code) {
    case ApiErrorCode::bad_request: return "bad_request";
    case ApiErrorCode::not_found: return "not_found";
    case ApiErrorCode::model_mismatch: return "model_mismatch";
    case ApiErrorCode::internal: return "internal";
  }
  return "internal";
}

int http_status(ApiErrorCode code) {
  switch (code) {
    case ApiErrorCode::bad_request: return 400;
    case ApiErrorCode::not_found: return 404;
    case ApiErrorCode::model_mismatch: return 409;
    case ApiErrorCode::internal: return 500;
  }
  return 500;
}

json ApiError::to_json() const {
  return json{{"error", {{"code", std::string(imn::to_string(code_))}, {"message", what()}, {"detail", detail_}}}};
}

namespace {

ApiError bad_request(const std::string& message, std::string detail = {}) {
  return ApiError(ApiErrorCode::bad_request, message, std::move(detail));
}

void check_fields(const json& request, std::initializer_list<std::string_view> allowed) {
  if (!request.is_object()) throw bad_request("request body must be a JSON object");
  for (const auto& [key, value] : request.items()) {
    bool known = key == "schema_version" || key == "formulation";
    for (auto a : allowed) known = known || key == a;
    if (!known) throw bad_request("unknown request field '" + key + "'", "field: " + key);
  }
  if (auto it = request.find("schema_version"); it != request.end()) {
    if (!it->is_number_integer() || it->get<int>() != kApiSchemaVersion) {
      throw bad_request("unsupported schema_version " + it->dump() + ", expected " + std::to_string(kApiSchemaVersion));
    }
  }
}

void check_formulation(const json& request, const ImnModel& model) {
  auto it = request.find("formulation");
  if (it == request.end()) return;
  if (!it->is_string()) throw bad_request("'formulation' must be a string");
  Formulation wanted;
  try {
    wanted = parse_formulation(it->get<std::string>());
  } catch (const ConfigError& e) {
    throw bad_request(e.what());
  }
  if (wanted != model.formulation()) {
    throw ApiError(ApiErrorCode::model_mismatch,
                   "request expects a " + std::string(to_string(wanted)) + " model but the loaded checkpoint is " +
                       std::string(to_string(model.formulation())),
                   "num_outputs: " + std::to_string(model.config().num_outputs));
  }
}

std::size_t require_count(const json& request, const char* key) {
  auto it = request.find(key);
  if (it == request.end()) throw bad_request(std::string("missing field '") + key + "'");
  if (!it->is_number_unsigned() && !(it->is_number_integer() && it->get<long long>() >= 0)) {
    throw bad_request(std::string("'") + key + "' must be a non-negative integer");
  }
  return it->get<std::size_t>();
}

std::optional<std::size_t> optional_count(const json& request, const char* key) {
  if (!request.contains(key)) return std::nullopt;
  return require_count(request, key);
}

std::string require_id(const json& request) {
  auto it = request.find("id");
  if (it == request.end()) throw bad_request("missing field 'id'");
  if (!it->is_string()) throw bad_request("'id' must be a string");
  return it->get<std::string>();
}

std::size_t resolve_class(const json& request, const ImnModel& model) {
  const std::size_t k = optional_count(request, "k").value_or(default_class(model));
  if (k >= model.config().num_outputs) {
    throw bad_request("class index " + std::to_string(k) + " out of range for a model with " +
                      std::to_string(model.config().num_outputs) + " output(s)");
  }
  return k;
}

json output_json(const ImnOutput<float>& out) {
  json logits = json::array(), bias = json::array(), probs = json::array();
  for (float v : out.logits.data()) logits.push_back(v);
  for (float v : out.bias.data()) bias.push_back(v);
  for (float v : out.probabilities.data()) probs.push_back(v);
  return json{{"formulation", std::string(to_string(out.formulation))},
              {"probability", out.positive_probability()},
              {"probabilities", std::move(probs)},
              {"logits", std::move(logits)},
              {"bias", std::move(bias)}};
}

}  // namespace

ExplorerService::ExplorerService(ImnModel model, Dataset records) : model_(std::move(model)) {
  for (auto& r : records.records) {
    if (!r.normalized) r = zscore(r);
    if (!index_.emplace(r.id, records_.records.size()).second) throw DataError("duplicate record id '" + r.id + "'");
    records_.records.push_back(std::move(r));
  }
}

ExplorerService ExplorerService::from_files(const std::filesystem::path& checkpoint,
                                            const std::filesystem::path& manifest) {
  return ExplorerService(load_checkpoint(checkpoint), load_records(load_manifest(manifest)));
}

const EcgRecord& ExplorerService::record(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw ApiError(ApiErrorCode::not_found, "unknown record id '" + id + "'", "id: " + id);
  return records_.records[it->second];
}

json ExplorerService::list_records() const {
  json items = json::array();
  for (const auto& r : records_.records) {
    json item = {{"id", r.id}, {"labels", r.labels.tokens()}, {"fold", r.fold}, {"L", r.length()}, {"fs", r.fs}};
    if (!r.notes.empty()) item["notes"] = r.notes;
    items.push_back(std::move(item));
  }
  return json{{"schema_version", kApiSchemaVersion}, {"records", std::move(items)}};
}

json ExplorerService::signal(const std::string& id) const {
  const auto& r = record(id);
  json rows = json::array();
  const std::size_t length = r.length();
  for (std::size_t c = 0; c < r.num_leads(); ++c) {
    const auto row = r.signal.data().subspan(c * length, length);
    rows.push_back(std::vector<float>(row.begin(), row.end()));
  }
  return json{{"schema_version", kApiSchemaVersion}, {"id", r.id}, {"C", r.num_leads()}, {"L", length},
              {"fs", r.fs}, {"normalized", true}, {"values", std::move(rows)}};
}

json ExplorerService::predict(const json& request) const {
  check_fields(request, {"id", "signal"});
  check_formulation(request, model_);
  const bool has_id = request.contains("id"), has_signal = request.contains("signal");
  if (has_id == has_signal) throw bad_request("provide exactly one of 'id' or 'signal'");

  const auto& cfg = model_.config();
  json response;
  if (has_id) {
    const auto& r = record(require_id(request));
    response = output_json(model_.predict(r.signal));
    response["id"] = r.id;
    response["normalized_server_side"] = false;
  } else {
    const json& rows = request["signal"];
    if (!rows.is_array() || rows.size() != cfg.num_leads) {
      throw bad_request("'signal' must be an array of " + std::to_string(cfg.num_leads) + " leads");
    }
    EcgRecord raw;
    raw.id = "inline";
    raw.signal = Tensor<float>({cfg.num_leads, cfg.signal_length});
    auto out = raw.signal.data();
    for (std::size_t c = 0; c < cfg.num_leads; ++c) {
      const json& row = rows[c];
      if (!row.is_array() || row.size() != cfg.signal_length) {
        throw bad_request("lead " + std::to_string(c) + " must hold " + std::to_string(cfg.signal_length) + " values");
      }
      for (std::size_t t = 0; t < cfg.signal_length; ++t) {
        if (!row[t].is_number()) throw bad_request("signal values must be numbers");
        out[c * cfg.signal_length + t] = row[t].get<float>();
      }
    }
    if (!raw.signal.all_finite()) throw bad_request("signal contains non-finite values");
    response = output_json(model_.predict(zscore(raw).signal));
    response["normalized_server_side"] = true;
  }
  response["schema_version"] = kApiSchemaVersion;
  return response;
}

json ExplorerService::attribute(const json& request) const {
  check_fields(request, {"id", "k", "window", "stride", "top_k", "sign"});
  check_formulation(request, model_);
  const auto& r = record(require_id(request));
  const std::size_t k = resolve_class(request, model_);
  const std::size_t window = require_count(request, "window");
  const std::size_t stride = require_count(request, "stride");
  const std::size_t top = optional_count(request, "top_k").value_or(5);
  RankSign sign = RankSign::positive;
  if (auto it = request.find("sign"); it != request.end()) {
    if (!it->is_string()) throw bad_request("'sign' must be a string");
    sign = parse_rank_sign(it->get<std::string>());
  }
  const auto map = impact_map(r.signal, model_.predict(r.signal), k, r.id);
  const auto grid = aggregate_segments(map, window, stride);
  json out = attribution_export(map, grid, top_k_contributors(grid, top, sign));
  out["schema_version"] = kApiSchemaVersion;
  return out;
}

json ExplorerService::ablate(const json& request) const {
  check_fields(request, {"id", "k", "lead_mask", "segments", "mode"});
  check_formulation(request, model_);
  const auto& r = record(require_id(request));
  AblationRequest req;
  req.k = resolve_class(request, model_);
  if (auto it = request.find("lead_mask"); it != request.end()) {
    if (!it->is_array()) throw bad_request("'lead_mask' must be an array of lead indices");
    for (const auto& v : *it) {
      if (!v.is_number_unsigned()) throw bad_request("'lead_mask' entries must be non-negative integers");
      req.lead_mask.push_back(v.get<std::size_t>());
    }
  }
  if (auto it = request.find("segments"); it != request.end()) {
    if (!it->is_array()) throw bad_request("'segments' must be an array");
    for (const auto& s : *it) {
      if (!s.is_object()) throw bad_request("each segment must be an object {lead?, start, end}");
      for (const auto& [key, value] : s.items()) {
        if (key != "lead" && key != "start" && key != "end") {
          throw bad_request("unknown segment field '" + key + "'", "field: segments[]." + key);
        }
      }
      SegmentMask m;
      if (s.contains("lead") && !s["lead"].is_null()) m.lead = require_count(s, "lead");
      m.begin = require_count(s, "start");
      m.end = require_count(s, "end");
      req.segments.push_back(m);
    }
  }
  if (auto it = request.find("mode"); it != request.end()) {
    if (!it->is_string()) throw bad_request("'mode' must be a string");
    req.mode = parse_ablation_mode(it->get<std::string>());
  }
  json out = ablation_json(imn::ablate(model_, r, req));
  out["id"] = r.id;
  out["schema_version"] = kApiSchemaVersion;
  return out;
}

ApiResponse ExplorerService::handle(std::string_view method, std::string_view path, std::string_view body) const {
  try {
    auto parse_body = [&]() {
      try {
        return json::parse(body.empty() ? std::string_view("{}") : body);
      } catch (const json::exception& e) {
        throw bad_request("request body is not valid JSON", e.what());
      }
    };
    json result;
    constexpr std::string_view records_prefix = "/records/";
    constexpr std::string_view signal_suffix = "/signal";
    if (method == "GET" && path == "/records") {
      result = list_records();
    } else if (method == "GET" && path.starts_with(records_prefix) && path.ends_with(signal_suffix) &&
               path.size() > records_prefix.size() + signal_suffix.size()) {
      const auto id = path.substr(records_prefix.size(), path.size() - records_prefix.size() - signal_suffix.size());
      result = signal(std::string(id));
    } else if (method == "POST" && path == "/predict") {
      result = predict(parse_body());
    } else if (method == "POST" && path == "/attribute") {
      result = attribute(parse_body());
    } else if (method == "POST" && path == "/ablate") {
      result = ablate(parse_body());
    } else {
      throw ApiError(ApiErrorCode::not_found, "no route for " + std::string(method) + " " + std::string(path));
    }
    return {200, result.dump()};
  } catch (const ApiError& e) {
    return {http_status(e.code()), e.to_json().dump()};
  } catch (const AttributionError& e) {
    return {400, bad_request(e.what()).to_json().dump()};
  } catch (const std::exception& e) {
    return {500, ApiError(ApiErrorCode::internal, "internal error", e.what()).to_json().dump()};
  }
}

}  // namespace imn
