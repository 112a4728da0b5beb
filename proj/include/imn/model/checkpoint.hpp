#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "imn/model/model.hpp"

// A checkpoint is a directory with two files:
//   manifest.json  {"format": "imn-checkpoint", "format_version": 1, "config": {...},
//                   "tensors": [{"name", "shape", "offset", "bytes"}],
//                   "batchnorm": [{"name", "batches_tracked"}]}
//   tensors.bin    the tensors back to back in the binary tensor layout,
//                  each starting at its manifest offset

namespace imn {

inline constexpr int kCheckpointFormatVersion = 1;
inline constexpr const char* kCheckpointFormat = "imn-checkpoint";

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The checkpoint is valid but does not match what the caller asked for.
class ModelMismatchError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

nlohmann::json config_to_json(const ImnConfig& config);
ImnConfig config_from_json(const nlohmann::json& doc);

void save_checkpoint(const ImnModel& model, const std::filesystem::path& dir);

/// Loads a checkpoint. With `expected` set, a model of another formulation is
/// rejected with ModelMismatchError. Nothing is returned unless every tensor
/// was read and checked.
ImnModel load_checkpoint(const std::filesystem::path& dir, std::optional<Formulation> expected = std::nullopt);

}  // namespace imn
