#pragma once

#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>

#include <json.hpp>

#include "imn/data/dataset.hpp"
#include "imn/model/model.hpp"

namespace imn {

inline constexpr int kApiSchemaVersion = 1;

enum class ApiErrorCode { bad_request, not_found, model_mismatch, internal };

std::string_view to_string(ApiErrorCode code);
int http_status(ApiErrorCode code);

class ApiError : public std::runtime_error {
 public:
  ApiError(ApiErrorCode code, const std::string& message, std::string detail = {})
      : std::runtime_error(message), code_(code), detail_(std::move(detail)) {}

  ApiErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }
  /// {"error": {"code", "message", "detail"}}
  nlohmann::json to_json() const;

 private:
  ApiErrorCode code_;
  std::string detail_;
};

struct ApiResponse {
  int status = 200;
  std::string body;
};

/// Request handling for the explorer boundary, independent of any transport.
/// The loaded model and records are never modified after construction, so a
/// single instance may serve concurrent requests.
///
///   GET  /records
///   GET  /records/{id}/signal
///   POST /predict    {"id"} or {"signal": [[...C rows of L raw values]]}
///   POST /attribute  {"id", "window", "stride", optional "k", "top_k", "sign"}
///   POST /ablate     {"id", optional "lead_mask", "segments": [{"lead"?, "start", "end"}], "mode", "k"}
///
/// Every request body may also carry "schema_version" (must be 1) and
/// "formulation" (rejected with model_mismatch when it differs from the
/// model's). Any other field is rejected.
class ExplorerService {
 public:
  /// Records that are not yet normalized are z-scored on load.
  ExplorerService(ImnModel model, Dataset records);

  static ExplorerService from_files(const std::filesystem::path& checkpoint, const std::filesystem::path& manifest);

  ApiResponse handle(std::string_view method, std::string_view path, std::string_view body) const;

  const ImnModel& model() const noexcept { return model_; }
  const EcgRecord& record(const std::string& id) const;

 private:
  nlohmann::json list_records() const;
  nlohmann::json signal(const std::string& id) const;
  nlohmann::json predict(const nlohmann::json& request) const;
  nlohmann::json attribute(const nlohmann::json& request) const;
  nlohmann::json ablate(const nlohmann::json& request) const;

  ImnModel model_;
  Dataset records_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

}  // namespace imn
